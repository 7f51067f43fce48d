//! CSV and SVG artifacts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::TrajectoryBatch;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Domain(format!("csv: {other:?}")),
    }
}

/// Loss history as `epoch,loss`, epochs counted from 1.
pub fn write_loss_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["epoch", "loss"]).map_err(csv_err)?;
    for (k, l) in history.iter().enumerate() {
        w.write_record([(k + 1).to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A sampler state that can be written as CSV fields.
pub trait CsvState {
    /// Whether the state is a finite-state index.
    const DISCRETE: bool;

    fn fields(&self, out: &mut Vec<String>);
}

impl CsvState for usize {
    const DISCRETE: bool = true;

    fn fields(&self, out: &mut Vec<String>) {
        out.push(self.to_string());
    }
}

impl CsvState for Vec<f64> {
    const DISCRETE: bool = false;

    fn fields(&self, out: &mut Vec<String>) {
        out.extend(self.iter().map(|v| v.to_string()));
    }
}

impl CsvState for [f64; 2] {
    const DISCRETE: bool = false;

    fn fields(&self, out: &mut Vec<String>) {
        out.extend(self.iter().map(|v| v.to_string()));
    }
}

/// Header of a sample CSV: `path_id,time,state_index` for finite states,
/// `sample_id,t,x_1..x_d` otherwise.
pub fn samples_header<S: CsvState>(dim: usize) -> Vec<String> {
    if S::DISCRETE {
        vec!["path_id".into(), "time".into(), "state_index".into()]
    } else {
        let mut h = vec!["sample_id".to_string(), "t".to_string()];
        h.extend((1..=dim).map(|i| format!("x_{i}")));
        h
    }
}

/// Writes the states at the stored indices `steps`, snapshot by snapshot.
pub fn write_samples_csv<S: CsvState>(
    path: &Path,
    dim: usize,
    batch: &TrajectoryBatch<S>,
    steps: &[usize],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(samples_header::<S>(dim)).map_err(csv_err)?;
    let mut rec = Vec::new();
    for &l in steps {
        let states = batch
            .states
            .get(l)
            .ok_or_else(|| Error::Domain(format!("snapshot {l} outside a run of {} states", batch.states.len())))?;
        for (i, s) in states.iter().enumerate() {
            rec.clear();
            rec.push(i.to_string());
            rec.push(batch.times[l].to_string());
            s.fields(&mut rec);
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Grid values as `i,j,value`, `i` the row index.
pub fn write_grid_csv(path: &Path, grid: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["i", "j", "value"]).map_err(csv_err)?;
    for (i, row) in grid.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            w.write_record([i.to_string(), j.to_string(), v.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Normalized `bins × bins` histogram of points in `[0, 1)²`; `grid[i][j]`
/// counts `x` in bin `i` and `y` in bin `j`.
pub fn torus_histogram(points: &[[f64; 2]], bins: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![vec![0.0; bins]; bins];
    if points.is_empty() || bins == 0 {
        return grid;
    }
    let w = 1.0 / points.len() as f64;
    let cell = |v: f64| ((v.rem_euclid(1.0) * bins as f64) as usize).min(bins - 1);
    for p in points {
        grid[cell(p[0])][cell(p[1])] += w;
    }
    grid
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 40.0;
const POINT_RADIUS: f64 = 1.5;
const POINT_COLOR: &str = "#1f5fa8";
const AXIS_COLOR: &str = "#444444";

/// Plot window `[x_lo, x_hi] × [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Bounds {
    pub const UNIT: Bounds = Bounds { x: (0.0, 1.0), y: (0.0, 1.0) };

    /// Smallest window holding `points`, padded by 5%.
    pub fn fit(points: &[[f64; 2]]) -> Bounds {
        let span = |k: usize| {
            let (lo, hi) = points
                .iter()
                .map(|p| p[k])
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                return (0.0, 1.0);
            }
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - pad, hi + pad)
        };
        Bounds { x: span(0), y: span(1) }
    }
}

/// Self-contained SVG 1.1 scatter plot with a frame and axis labels.
pub fn scatter_svg(points: &[[f64; 2]], bounds: Bounds, title: &str) -> String {
    let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
    let sx = |v: f64| SVG_MARGIN + (v - bounds.x.0) / (bounds.x.1 - bounds.x.0) * inner;
    let sy = |v: f64| SVG_SIZE - SVG_MARGIN - (v - bounds.y.0) / (bounds.y.1 - bounds.y.0) * inner;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{SVG_MARGIN}" y="{SVG_MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="{AXIS_COLOR}"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        SVG_SIZE / 2.0,
        SVG_MARGIN / 2.0 + 5.0,
        escape(title)
    );
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, v: f64| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="10" fill="{AXIS_COLOR}" text-anchor="{anchor}">{v:.3}</text>"#
        );
    };
    let bottom = SVG_SIZE - SVG_MARGIN;
    label(&mut s, SVG_MARGIN, bottom + 14.0, "start", bounds.x.0);
    label(&mut s, SVG_SIZE - SVG_MARGIN, bottom + 14.0, "end", bounds.x.1);
    label(&mut s, SVG_MARGIN - 4.0, bottom, "end", bounds.y.0);
    label(&mut s, SVG_MARGIN - 4.0, SVG_MARGIN + 10.0, "end", bounds.y.1);
    let _ = writeln!(s, r#"<g fill="{POINT_COLOR}" fill-opacity="0.6">"#);
    for p in points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{POINT_RADIUS}"/>"#, sx(p[0]), sy(p[1]));
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

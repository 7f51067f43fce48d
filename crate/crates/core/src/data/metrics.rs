use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimator used by [`energy_distance_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyEstimator {
    /// Within-sample means include the zero diagonal; exactly 0 for equal
    /// multisets and never negative.
    #[default]
    V,
    /// Within-sample means over distinct pairs; unbiased, can dip below 0.
    U,
}

/// Distance between two points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Per-axis shortest distance on the unit torus.
    Torus,
}

impl Metric {
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
            Metric::Torus => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = (x - y).rem_euclid(1.0);
                    d.min(1.0 - d).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

fn check_sets<X: AsRef<[f64]>>(a: &[X], b: &[X]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("energy distance needs nonempty sample sets".into()));
    }
    let d = a[0].as_ref().len();
    for x in a.iter().chain(b) {
        if x.as_ref().len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.as_ref().len() });
        }
    }
    Ok(d)
}

/// `Σ_{i,j} |a_i - b_j|`, rows summed in parallel and reduced in index order.
fn pair_sum<X: AsRef<[f64]> + Sync>(a: &[X], b: &[X], metric: Metric) -> f64 {
    let rows: Vec<f64> =
        a.par_iter().map(|x| b.iter().map(|y| metric.distance(x.as_ref(), y.as_ref())).sum()).collect();
    rows.iter().sum()
}

/// `Σ_{i<j} (x_j - x_i)` for sorted `x`.
fn sorted_pair_sum(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    x.iter().enumerate().map(|(k, v)| v * (2.0 * k as f64 - n + 1.0)).sum()
}

fn sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut s: Vec<f64> = v.collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Energy distance `2E|a-b| - E|a-a'| - E|b-b'|` with the V-statistic.
pub fn energy_distance<X: AsRef<[f64]> + Sync>(a: &[X], b: &[X]) -> Result<f64> {
    energy_distance_with(a, b, Metric::Euclidean, EnergyEstimator::V)
}

pub fn energy_distance_with<X: AsRef<[f64]> + Sync>(
    a: &[X],
    b: &[X],
    metric: Metric,
    estimator: EnergyEstimator,
) -> Result<f64> {
    let d = check_sets(a, b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    // within-set sums over unordered pairs, and the cross sum
    let (wa, wb, cross) = if d == 1 && metric == Metric::Euclidean {
        let sa = sorted(a.iter().map(|x| x.as_ref()[0]));
        let sb = sorted(b.iter().map(|x| x.as_ref()[0]));
        let sab = sorted(sa.iter().chain(&sb).copied());
        let (wa, wb) = (sorted_pair_sum(&sa), sorted_pair_sum(&sb));
        (wa, wb, sorted_pair_sum(&sab) - wa - wb)
    } else {
        (pair_sum(a, a, metric) / 2.0, pair_sum(b, b, metric) / 2.0, pair_sum(a, b, metric))
    };
    let (da, db) = match estimator {
        EnergyEstimator::V => (n * n, m * m),
        EnergyEstimator::U => ((n * (n - 1.0)).max(1.0), (m * (m - 1.0)).max(1.0)),
    };
    Ok(2.0 * cross / (n * m) - 2.0 * wa / da - 2.0 * wb / db)
}

/// Histogram total variation `½ Σ |p̂_A - p̂_B|` on `bins` equal cells of
/// `[lo, hi)` per axis. Points outside the box share one overflow cell.
pub fn histogram_tv<X: AsRef<[f64]>>(a: &[X], b: &[X], bins: usize, lo: f64, hi: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("histogram distance needs nonempty sample sets".into()));
    }
    if bins == 0 || !(hi > lo) {
        return Err(Error::Domain(format!("invalid binning {bins} on [{lo}, {hi})")));
    }
    let d = check_sets(a, b)?;
    let cells = bins.checked_pow(d as u32).filter(|c| *c <= 1 << 24).ok_or_else(|| {
        Error::Domain(format!("{bins}^{d} histogram cells is too many"))
    })?;
    let index = |x: &[f64]| -> usize {
        let mut k = 0;
        for &u in x {
            let f = (u - lo) / (hi - lo);
            if !(0.0..1.0).contains(&f) {
                return cells;
            }
            k = k * bins + ((f * bins as f64) as usize).min(bins - 1);
        }
        k
    };
    let hist = |s: &[X]| {
        let mut h = vec![0.0; cells + 1];
        for x in s {
            h[index(x.as_ref())] += 1.0 / s.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    Ok(0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_path_matches_pairwise() {
        let a: Vec<Vec<f64>> = [0.3, -1.2, 2.5, 0.0].iter().map(|v| vec![*v]).collect();
        let b: Vec<Vec<f64>> = [1.0, 0.7, -0.4].iter().map(|v| vec![*v]).collect();
        for est in [EnergyEstimator::V, EnergyEstimator::U] {
            let fast = energy_distance_with(&a, &b, Metric::Euclidean, est).unwrap();
            // scaled copies stay within half a period, so torus distances are Euclidean
            let sa: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] / 10.0]).collect();
            let sb: Vec<Vec<f64>> = b.iter().map(|v| vec![v[0] / 10.0]).collect();
            let slow = energy_distance_with(&sa, &sb, Metric::Torus, est).unwrap() * 10.0;
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn identical_sets() {
        let a = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.3, 0.3]];
        assert!(energy_distance(&a, &a).unwrap().abs() < 1e-15);
        assert_eq!(histogram_tv(&a, &a, 4, 0.0, 1.0).unwrap(), 0.0);
        let far = vec![vec![5.0, 5.0]];
        assert_eq!(histogram_tv(&a, &far, 4, 0.0, 1.0).unwrap(), 1.0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(energy_distance(&a, &empty).is_err());
    }
}

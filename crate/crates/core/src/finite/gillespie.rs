use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::conditional::sample_categorical;
use crate::error::{Error, Result};
use crate::generator::{RateFamily, RateMatrix};

/// Piecewise-constant càdlàg path. `points[k] = (t_k, x_k)` means the chain
/// sits in `x_k` on `[t_k, t_{k+1})`; the last point is the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<(f64, usize)>,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.points.last().map(|p| p.0).unwrap_or(0.0)
    }

    pub fn initial(&self) -> usize {
        self.points[0].1
    }

    pub fn terminal(&self) -> usize {
        self.points.last().expect("trajectory is never empty").1
    }

    /// Number of jumps (state changes).
    pub fn jumps(&self) -> usize {
        self.points.len().saturating_sub(2)
    }

    pub fn state_at(&self, t: f64) -> usize {
        let k = self.points.partition_point(|p| p.0 <= t);
        self.points[k.saturating_sub(1)].1
    }

    /// Constant pieces `(start, end, state)` of positive length.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.points.windows(2).map(|w| (w[0].0, w[1].0, w[0].1))
    }
}

fn pick_target(rm: &RateMatrix, x: usize, rng: &mut impl Rng) -> usize {
    let w: Vec<f64> = (0..rm.size()).map(|y| rm.intensity(y, x)).collect();
    sample_categorical(&w, rng)
}

/// Simulates a chain with frozen rates `rm` for `duration`, returning only the
/// final state.
pub fn simulate_frozen(rm: &RateMatrix, x0: usize, duration: f64, rng: &mut impl Rng) -> usize {
    let mut x = x0;
    let mut t = 0.0;
    loop {
        let q = rm.exit_rate(x);
        if q <= 0.0 {
            return x;
        }
        let e: f64 = Exp1.sample(rng);
        t += e / q;
        if t >= duration {
            return x;
        }
        x = pick_target(rm, x, rng);
    }
}

/// Exact event-driven simulation on `[0, horizon]`. Homogeneous families use the
/// direct method; time-dependent ones use thinning against
/// [`RateFamily::exit_rate_bound`].
pub fn gillespie_sample<F: RateFamily + ?Sized>(
    family: &F,
    x0: usize,
    horizon: f64,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if x0 >= family.size() {
        return Err(Error::Domain(format!("state {x0} out of range {}", family.size())));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Domain(format!("horizon must be >= 0, got {horizon}")));
    }
    let mut points = vec![(0.0, x0)];
    let mut x = x0;
    let mut t = 0.0;
    if family.is_time_homogeneous() {
        let rm = family.at(0.0);
        loop {
            let q = rm.exit_rate(x);
            if q <= 0.0 {
                break;
            }
            let e: f64 = Exp1.sample(rng);
            t += e / q;
            if t >= horizon {
                break;
            }
            x = pick_target(&rm, x, rng);
            points.push((t, x));
        }
    } else {
        let bound = family
            .exit_rate_bound(0.0, horizon)
            .filter(|b| b.is_finite())
            .ok_or_else(|| Error::UnboundedRate("thinning needs a finite exit-rate bound".into()))?;
        if bound > 0.0 {
            loop {
                let e: f64 = Exp1.sample(rng);
                t += e / bound;
                if t >= horizon {
                    break;
                }
                let rm = family.at(t);
                let q = rm.exit_rate(x);
                if q > bound * (1.0 + 1e-12) {
                    return Err(Error::UnboundedRate(format!("exit rate {q} exceeds bound {bound} at t = {t}")));
                }
                if rng.random::<f64>() * bound < q {
                    x = pick_target(&rm, x, rng);
                    points.push((t, x));
                }
            }
        }
    }
    points.push((horizon, x));
    Ok(Trajectory { points })
}

/// Writes trajectories as CSV with header `path_id,time,state_index`, one row
/// per point (including the terminal point at the horizon).
pub fn write_trajectories_csv<W: Write>(mut w: W, paths: &[Trajectory]) -> Result<()> {
    writeln!(w, "path_id,time,state_index")?;
    for (id, p) in paths.iter().enumerate() {
        for &(t, x) in &p.points {
            writeln!(w, "{id},{t},{x}")?;
        }
    }
    Ok(())
}

//! Training-time distributions and inference time grids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution `Ψ` of training times on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimeDistribution {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl TimeDistribution {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!("time distribution needs 0 <= lo < hi, got [{lo}, {hi}]")));
        }
        if matches!(self, Self::LogUniform { .. }) && lo <= 0.0 {
            return Err(Error::Config("log-uniform time distribution needs lo > 0".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi } | Self::LogUniform { lo, hi } => (lo, hi),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::LogUniform { lo, hi } => (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp(),
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if t < lo || t > hi {
            return 0.0;
        }
        match self {
            Self::Uniform { .. } => 1.0 / (hi - lo),
            Self::LogUniform { .. } => 1.0 / (t * (hi.ln() - lo.ln())),
        }
    }
}

/// Uniform inference grid with `steps * kappa = horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        let g = Self { horizon, steps };
        g.validate()?;
        Ok(g)
    }

    /// Grid from a target step size; `kappa` must divide the horizon to 1e-12.
    pub fn from_step(horizon: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {kappa}")));
        }
        let steps = (horizon / kappa).round() as usize;
        if steps == 0 || (steps as f64 * kappa - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::Config(format!("step {kappa} does not divide horizon {horizon}")));
        }
        Self::new(horizon, steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.horizon / self.steps as f64
        }
    }

    /// Backward time at the start of step `l`.
    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.kappa()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn grid_invariant() {
        let g = TimeGrid::from_step(4.0, 0.02).unwrap();
        assert_eq!(g.steps, 200);
        assert!((g.steps as f64 * g.kappa() - g.horizon).abs() < 1e-12);
        assert!(TimeGrid::from_step(1.0, 0.3).is_err());
    }

    #[test]
    fn log_uniform_stays_in_range() {
        let psi = TimeDistribution::LogUniform { lo: 1e-3, hi: 2.0 };
        psi.validate().unwrap();
        let mut rng = seeded(0);
        for _ in 0..1000 {
            let t = psi.sample(&mut rng);
            assert!((1e-3..=2.0).contains(&t));
        }
        assert!(TimeDistribution::LogUniform { lo: 0.0, hi: 1.0 }.validate().is_err());
    }
}

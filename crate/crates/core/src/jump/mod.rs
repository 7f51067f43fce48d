//! Pure-jump forward process on the unit torus `T² = R²/Z²`.
//!
//! The Lévy kernel is `λ(y - x) = M · N_wrapped(y - x; 0, σ² I)`, so the forward
//! process is compound Poisson with rate `M` and wrapped Gaussian increments.
//! Its transition law has an atom of mass `e^{-tM}` at the starting point (no
//! jump yet) plus a smooth part; the two are kept apart throughout.

mod fourier;
mod intensity;
mod loss;

pub use fourier::{fft2, ContinuousPart, TorusConditional, CLAMP_FLOOR, MAX_CLAMPED_MASS};
pub use intensity::{
    backward_jump_step, grid_points, ConvolutionField, GridPotential, JumpPotential, JumpStepStats, ReferenceIntegral,
    MAX_TRIES_PER_JUMP, MIN_ACCEPTANCE, MIN_PROPOSALS, SUP_SAFETY,
};
pub use loss::{draw_jump_sample, jump_sm_loss, jump_term, jump_term_grad, JumpSample};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the unit torus, coordinates in `[0, 1)`.
pub type Point = [f64; 2];

/// Kernel and quadrature settings of the torus jump model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusJumpSpec {
    /// Kernel bandwidth `σ_J` on the unit torus.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Total jump intensity `M = ∫ λ`.
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Quadrature grid size `N` per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Fourier mode cutoff `K` per axis.
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_sigma() -> f64 {
    0.15
}
fn default_mass() -> f64 {
    4.0
}
fn default_grid() -> usize {
    64
}
fn default_modes() -> usize {
    32
}

impl Default for TorusJumpSpec {
    fn default() -> Self {
        Self { sigma: default_sigma(), mass: default_mass(), grid: default_grid(), modes: default_modes() }
    }
}

/// Wraps a coordinate into `[0, 1)`.
#[inline]
pub fn wrap(u: f64) -> f64 {
    let w = u.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Shortest signed displacement on the circle, in `[-1/2, 1/2)`.
#[inline]
pub fn wrap_delta(d: f64) -> f64 {
    wrap(d + 0.5) - 0.5
}

impl TorusJumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {}", self.sigma)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Config(format!("kernel mass must be positive, got {}", self.mass)));
        }
        if self.grid < 8 {
            return Err(Error::Config(format!("grid must have at least 8 points per axis, got {}", self.grid)));
        }
        if self.modes == 0 || 2 * self.modes > self.grid {
            return Err(Error::Config(format!("mode cutoff {} must lie in 1..={}", self.modes, self.grid / 2)));
        }
        Ok(())
    }

    /// Normalized 1-D wrapped Gaussian density at displacement `d`.
    pub fn wrapped_gaussian_1d(sigma: f64, d: f64) -> f64 {
        let d = wrap_delta(d);
        let images = (10.0 * sigma).ceil() as i64 + 1;
        let c = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        (-images..=images)
            .map(|n| {
                let u = d + n as f64;
                c * (-u * u / (2.0 * sigma * sigma)).exp()
            })
            .sum()
    }

    /// `λ(δ)`; integrates to `M` over the torus.
    pub fn kernel(&self, delta: Point) -> f64 {
        self.mass
            * Self::wrapped_gaussian_1d(self.sigma, delta[0])
            * Self::wrapped_gaussian_1d(self.sigma, delta[1])
    }

    /// Fourier coefficient `λ̂(k) = M exp(-2π² σ² |k|²)`.
    pub fn kernel_hat(&self, k1: i64, k2: i64) -> f64 {
        let k2sum = (k1 * k1 + k2 * k2) as f64;
        self.mass * (-2.0 * std::f64::consts::PI.powi(2) * self.sigma * self.sigma * k2sum).exp()
    }

    /// Draws one wrapped-Gaussian jump from `x`.
    pub fn propose(&self, x: Point, rng: &mut dyn RngCore) -> Point {
        let n = Normal::new(0.0, self.sigma).expect("validated bandwidth");
        [wrap(x[0] + n.sample(rng)), wrap(x[1] + n.sample(rng))]
    }
}

/// Compound-Poisson forward draw: `N_t ~ Poisson(tM)` wrapped Gaussian jumps
/// from `x0`. Returns the end point and the jump count.
pub fn forward_jump_sample(spec: &TorusJumpSpec, x0: Point, t: f64, rng: &mut dyn RngCore) -> Result<(Point, u64)> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    let rate = t * spec.mass;
    let count = if rate > 0.0 {
        Poisson::new(rate).map_err(|e| Error::Domain(e.to_string()))?.sample(rng) as u64
    } else {
        0
    };
    let mut x = [wrap(x0[0]), wrap(x0[1])];
    for _ in 0..count {
        x = spec.propose(x, rng);
    }
    Ok((x, count))
}

pub(crate) fn uniform_point(rng: &mut dyn RngCore) -> Point {
    [rng.random::<f64>(), rng.random::<f64>()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn wrapping() {
        assert_eq!(wrap(1.25), 0.25);
        assert_eq!(wrap(-0.25), 0.75);
        assert!(wrap(-1e-18) < 1.0);
        assert!((wrap_delta(0.9) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn kernel_mass_and_coefficients() {
        let s = TorusJumpSpec::default();
        let n = 200;
        let mut total = 0.0;
        let mut c1 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = [i as f64 / n as f64, j as f64 / n as f64];
                let v = s.kernel(d);
                total += v;
                c1 += v * (2.0 * std::f64::consts::PI * d[0]).cos();
            }
        }
        let h = 1.0 / (n * n) as f64;
        assert!((total * h - s.mass).abs() < 1e-12);
        assert!((c1 * h - s.kernel_hat(1, 0)).abs() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let s = TorusJumpSpec::default();
        let (x, n) = forward_jump_sample(&s, [0.3, 0.7], 0.0, &mut seeded(3)).unwrap();
        assert_eq!(x, [0.3, 0.7]);
        assert_eq!(n, 0);
    }

    #[test]
    fn spec_validation() {
        assert!(TorusJumpSpec::default().validate().is_ok());
        assert!(TorusJumpSpec { modes: 40, ..Default::default() }.validate().is_err());
        assert!(TorusJumpSpec { sigma: 0.0, ..Default::default() }.validate().is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite::{evolve_density, exact_path_kl_marginal, kl_divergence, BackwardFamily};
use crate::generator::{ConstantRate, DensityVector, RateFamily, ScoreProvider};
use crate::time::TimeGrid;

/// Terms of the meta error bound on a finite-state instance.
///
/// `total` is `KL(p_0 ‖ q̂_T)` for the grid-stepped (frozen-rate) backward
/// chain, `continuous_total` the same for the exact backward chain, and
/// `numerical = total - continuous_total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub truncation: f64,
    pub estimation: f64,
    pub numerical: f64,
    pub total: f64,
    pub continuous_total: f64,
    /// `max(numerical, 0) / (T κ)`.
    pub fitted_c: f64,
    pub horizon: f64,
    pub kappa: f64,
}

impl ErrorReport {
    /// Slack of `KL(p_0 ‖ q_T) ≤ KL(p_T ‖ q_0) + path KL` for the exact backward chain.
    pub fn continuous_slack(&self) -> f64 {
        self.truncation + self.estimation - self.continuous_total
    }

    /// Checks both the continuous bound and the grid bound with the fitted
    /// constant, up to `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        if self.continuous_slack() < -tol {
            return Err(Error::Tolerance {
                what: format!("bound violated by {:e}", -self.continuous_slack()),
                tol,
            });
        }
        let bound = self.truncation + self.estimation + self.fitted_c * self.horizon * self.kappa;
        if self.total > bound + tol {
            return Err(Error::Tolerance { what: format!("grid bound violated: {} > {bound}", self.total), tol });
        }
        Ok(())
    }
}

/// Fraction of the horizon left out at the end of the continuous backward
/// run. Exact backward rates out of states that are empty at time zero grow
/// like `1/t`, so the endpoint itself is singular; the mass left on those
/// states at `T (1 - gap)` is of order `gap`.
pub const BACKWARD_END_GAP: f64 = 1e-10;

/// Exact error decomposition for the backward chain with estimated score
/// `s_hat`, initial law `q0` and step grid `grid`.
pub fn error_decomposition_report<F, S>(
    family: &F,
    p0: &DensityVector,
    q0: &DensityVector,
    s_hat: &S,
    grid: &TimeGrid,
) -> Result<ErrorReport>
where
    F: RateFamily + ?Sized,
    S: ScoreProvider + ?Sized,
{
    grid.validate()?;
    if grid.steps == 0 {
        return Err(Error::Domain("error report needs at least one step".into()));
    }
    let horizon = grid.horizon;
    let start = |d: &DensityVector| DensityVector { values: d.values.clone(), time: 0.0 };
    let p0 = start(p0);
    let q0 = start(q0);
    let p_t = evolve_density(family, &p0, horizon)?;
    let truncation = kl_divergence(&p_t.values, &q0.values)?;
    let estimation = exact_path_kl_marginal(family, s_hat, &p0, horizon)?;

    let backward = BackwardFamily { forward: family, score: s_hat, horizon };
    let q_cont = evolve_density(&backward, &q0, horizon * (1.0 - BACKWARD_END_GAP))?;
    let continuous_total = kl_divergence(&p0.values, &q_cont.values)?;

    let kappa = grid.kappa();
    let mut q = q0;
    for l in 0..grid.steps {
        let t = horizon - grid.time(l);
        let frozen = ConstantRate(family.at(t).backward(&s_hat.score(t))?);
        q = evolve_density(&frozen, &DensityVector { values: q.values, time: 0.0 }, kappa)?;
    }
    let total = kl_divergence(&p0.values, &q.values)?;
    let numerical = total - continuous_total;
    Ok(ErrorReport {
        truncation,
        estimation,
        numerical,
        total,
        continuous_total,
        fitted_c: numerical.max(0.0) / (horizon * kappa),
        horizon,
        kappa,
    })
}

//! Diffusion forward processes, their score-matching loss, and the
//! Euler–Maruyama backward stepper.
//!
//! The backward SDE at backward time `τ` uses the forward coefficients at
//! `t = T - τ`:
//! `dy = (-b_t(y) + D_t(y) ŝ_t(y) + ∇·D_t(y)) dτ + Σ_t(y) dw`,
//! where `(∇·D)_i = Σ_j ∂_j D_ij`. Callers pass the forward time `t`.

mod gbm;
mod ou;

pub use gbm::GbmSpec;
pub use ou::{ou_conditional, ou_conditional_score, Ou, OuMixtureScore};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::rng::split;
use crate::time::TimeDistribution;

/// Diffusion matrix, a square-root factor and the row divergence at one point.
/// Matrices are row-major `dim × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionFields {
    pub d: Vec<f64>,
    pub factor: Vec<f64>,
    pub div: Vec<f64>,
}

/// Estimated diffusion score `ŝ_t(x)`.
pub trait DiffusionScore: Sync {
    fn score(&self, t: f64, x: &[f64]) -> Vec<f64>;
}

impl<F: Fn(f64, &[f64]) -> Vec<f64> + Sync> DiffusionScore for F {
    fn score(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self(t, x)
    }
}

/// A forward diffusion with closed-form transition law.
pub trait DiffusionProcess: Sync {
    fn dim(&self) -> usize;

    fn drift(&self, t: f64, x: &[f64]) -> Vec<f64>;

    fn fields(&self, t: f64, x: &[f64]) -> Result<DiffusionFields>;

    /// Draws `x_t` given `x0` from standard normals `z` (length `dim`).
    fn conditional_sample_from(&self, x0: &[f64], t: f64, z: &[f64]) -> Result<Vec<f64>>;

    /// `∇_{x_t} log p_{t|0}(x_t | x0)`.
    fn conditional_score(&self, x0: &[f64], xt: &[f64], t: f64) -> Result<Vec<f64>>;

    fn conditional_sample(&self, x0: &[f64], t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let z = normals(self.dim(), rng);
        self.conditional_sample_from(x0, t, &z)
    }

    /// One backward step of length `kappa` from state `y`, coefficients frozen
    /// at forward time `t`, driven by standard normals `xi`.
    fn backward_step(&self, y: &[f64], t: f64, kappa: f64, s_hat: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        euler_maruyama_step(self, y, t, kappa, s_hat, xi)
    }
}

pub(crate) fn normals(n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub(crate) fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..m.len() / n).map(|i| m[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Plain Euler–Maruyama in the original coordinates:
/// `y + (-b + D ŝ + ∇·D) κ + Σ √κ ξ`.
pub fn euler_maruyama_step<P: DiffusionProcess + ?Sized>(
    process: &P,
    y: &[f64],
    t: f64,
    kappa: f64,
    s_hat: &[f64],
    xi: &[f64],
) -> Result<Vec<f64>> {
    let n = process.dim();
    check_len(n, y.len())?;
    check_len(n, s_hat.len())?;
    check_len(n, xi.len())?;
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {kappa}")));
    }
    let b = process.drift(t, y);
    let f = process.fields(t, y)?;
    let ds = mat_vec(&f.d, s_hat);
    let noise = mat_vec(&f.factor, xi);
    let sk = kappa.sqrt();
    let out: Vec<f64> = (0..n).map(|i| y[i] + (-b[i] + ds[i] + f.div[i]) * kappa + sk * noise[i]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("backward step at t = {t}")));
    }
    Ok(out)
}

/// Backward step with forward time `t` and standard-normal noise drawn from `rng`.
pub fn backward_diffusion_step<P: DiffusionProcess + ?Sized>(
    process: &P,
    y: &[f64],
    t: f64,
    kappa: f64,
    score: &dyn DiffusionScore,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let xi = normals(process.dim(), rng);
    process.backward_step(y, t, kappa, &score.score(t, y), &xi)
}

/// Fails unless the symmetric `n × n` matrix `d` is positive semidefinite up to
/// a relative `1e-12` shift (Cholesky of `D + εI`).
pub fn check_psd(d: &[f64], n: usize) -> Result<()> {
    check_len(n * n, d.len())?;
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let m = DMatrix::from_row_slice(n, n, d) + DMatrix::identity(n, n) * (1e-12 * scale);
    if m.cholesky().is_none() {
        return Err(Error::NotPsd(format!("diffusion matrix {d:?}")));
    }
    Ok(())
}

/// `½ (ŝ - s)ᵀ D (ŝ - s)`.
pub fn quadratic_term(d: &[f64], s_hat: &[f64], s: &[f64]) -> f64 {
    let e: Vec<f64> = s_hat.iter().zip(s).map(|(a, b)| a - b).collect();
    let n = e.len();
    let de = DMatrix::from_row_slice(n, n, d) * DVector::from_column_slice(&e);
    0.5 * de.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>()
}

/// Monte Carlo score-matching loss `E[½ (ŝ - ∇log p_{t|0})ᵀ D(x_t) (ŝ - ∇log p_{t|0})]`
/// over `batch` draws of `(x0 ∈ data, t ~ Ψ, x_t ~ p_{t|0})`.
pub fn diffusion_sm_loss<P: DiffusionProcess + ?Sized>(
    process: &P,
    score: &dyn DiffusionScore,
    data: &[Vec<f64>],
    psi: &TimeDistribution,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let terms = diffusion_sm_terms(process, score, data, psi, batch, rng)?;
    Ok(terms.iter().sum::<f64>() / batch as f64)
}

/// Per-sample terms of [`diffusion_sm_loss`], in sample order.
pub fn diffusion_sm_terms<P: DiffusionProcess + ?Sized>(
    process: &P,
    score: &dyn DiffusionScore,
    data: &[Vec<f64>],
    psi: &TimeDistribution,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if data.is_empty() || batch == 0 {
        return Err(Error::Domain("loss needs a nonempty dataset and batch".into()));
    }
    let n = process.dim();
    split(rng, batch)
        .into_par_iter()
        .map(|mut r| {
            let x0 = &data[r.random_range(0..data.len())];
            let t = psi.sample(&mut r);
            let xt = process.conditional_sample(x0, t, &mut r)?;
            let s = process.conditional_score(x0, &xt, t)?;
            let sh = score.score(t, &xt);
            check_len(n, sh.len())?;
            let f = process.fields(t, &xt)?;
            check_psd(&f.d, n)?;
            Ok(quadratic_term(&f.d, &sh, &s))
        })
        .collect()
}

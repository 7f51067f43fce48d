//! Path-space KL between the true and the estimated backward chains.
//!
//! All routines return the same quantity
//! `𝔏 = ∫_0^T Σ_x p_t(x) Σ_y (r - 1 - ln r) s_t(x, y) λ_t(x, y) dt`,
//! `r = ŝ_t / s_t`, computed three independent ways.

use rand::Rng;
use rayon::prelude::*;

use super::conditional::sample_categorical;
use super::evolve::evolve_density;
use super::gillespie::gillespie_sample;
use crate::error::{Error, Result};
use crate::generator::{DensityVector, RateFamily, RateMatrix, ScoreProvider, ScoreTable};
use crate::quadrature::GaussLegendre;
use crate::rng::split;

/// Relative change between successive panel doublings at which quadrature stops.
pub const QUAD_REL_TOL: f64 = 1e-6;
/// Absolute change below which quadrature also stops; an exact score leaves
/// only roundoff in the integrand, which never settles in relative terms.
pub const QUAD_ABS_TOL: f64 = 1e-13;
const MAX_PANELS: usize = 512;

/// Integrates `∫_0^T f(t, Λ_t, p_t) dt` with composite 64-node Gauss–Legendre,
/// doubling the panel count until the change drops below [`QUAD_REL_TOL`]
/// relative or [`QUAD_ABS_TOL`] absolute. `p_t` is refreshed by the forward integrator at every node.
pub fn integrate_over_marginals<F, G>(family: &F, p0: &DensityVector, horizon: f64, f: G) -> Result<f64>
where
    F: RateFamily + ?Sized,
    G: Fn(f64, &RateMatrix, &[f64]) -> Result<f64>,
{
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let gl = GaussLegendre::new(64);
    let eval = |panels: usize| -> Result<f64> {
        let mut p = DensityVector { values: p0.values.clone(), time: 0.0 };
        let mut acc = 0.0;
        for (t, w) in gl.composite(0.0, horizon, panels) {
            p = evolve_density(family, &p, t)?;
            acc += w * f(t, &family.at(t), &p.values)?;
        }
        Ok(acc)
    };
    let mut panels = 1;
    let mut prev = eval(panels)?;
    while panels < MAX_PANELS {
        panels *= 2;
        let cur = eval(panels)?;
        if (cur - prev).abs() <= (QUAD_REL_TOL * cur.abs()).max(QUAD_ABS_TOL) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Tolerance { what: "path-KL quadrature did not settle".into(), tol: QUAD_REL_TOL })
}

fn weighted_integrand(rm: &RateMatrix, s: &ScoreTable, sh: &ScoreTable, p: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (x, &px) in p.iter().enumerate() {
        if px > 0.0 {
            acc += px * rm.kl_path_integrand(s, sh, x)?;
        }
    }
    Ok(acc)
}

/// Deterministic-quadrature path KL with supplied true and estimated scores.
pub fn exact_path_kl<F, S, H>(family: &F, s_true: &S, s_hat: &H, p0: &DensityVector, horizon: f64) -> Result<f64>
where
    F: RateFamily + ?Sized,
    S: ScoreProvider + ?Sized,
    H: ScoreProvider + ?Sized,
{
    integrate_over_marginals(family, p0, horizon, |t, rm, p| {
        weighted_integrand(rm, &s_true.score(t), &s_hat.score(t), p)
    })
}

/// As [`exact_path_kl`], with the true score read off the integrated marginal
/// at each node.
pub fn exact_path_kl_marginal<F, H>(family: &F, s_hat: &H, p0: &DensityVector, horizon: f64) -> Result<f64>
where
    F: RateFamily + ?Sized,
    H: ScoreProvider + ?Sized,
{
    integrate_over_marginals(family, p0, horizon, |t, rm, p| {
        weighted_integrand(rm, &positive_ratios(p)?, &s_hat.score(t), p)
    })
}

fn positive_ratios(p: &[f64]) -> Result<ScoreTable> {
    if p.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidDensity("marginal has an empty state; true score undefined".into()));
    }
    ScoreTable::from_density(p)
}

/// Path KL written through the density ratio `η_t = φ_t / p_t`:
/// `∫ Σ_x p_t(x) (η L η⁻¹ + L ln η)(x) dt`, for an estimate given by a
/// potential `φ_t` (so that `ŝ(x, y) = φ(y) / φ(x)`).
pub fn eta_form_path_kl<F, P>(family: &F, potential: P, p0: &DensityVector, horizon: f64) -> Result<f64>
where
    F: RateFamily + ?Sized,
    P: Fn(f64) -> Vec<f64>,
{
    integrate_over_marginals(family, p0, horizon, |t, rm, p| {
        let phi = potential(t);
        if p.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidDensity("marginal has an empty state; η undefined".into()));
        }
        let eta: Vec<f64> = phi.iter().zip(p).map(|(a, b)| a / b).collect();
        let form = rm.kl_integrand_eta_form(&eta)?;
        Ok(form.iter().zip(p).map(|(v, w)| v * w).sum())
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl McEstimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, std_err: (var / n).sqrt() }
    }
}

/// Monte Carlo path KL: averages `∫ I(t, X_t) dt` along Gillespie paths of the
/// forward chain started from `p0`, each segment integrated with 8-node
/// Gauss–Legendre.
#[allow(clippy::too_many_arguments)]
pub fn mc_path_kl<F, S, H>(
    family: &F,
    s_true: &S,
    s_hat: &H,
    p0: &DensityVector,
    horizon: f64,
    n_paths: usize,
    rng: &mut impl Rng,
) -> Result<McEstimate>
where
    F: RateFamily + ?Sized,
    S: ScoreProvider + ?Sized,
    H: ScoreProvider + ?Sized,
{
    if n_paths < 2 {
        return Err(Error::Domain("Monte Carlo path KL needs at least two paths".into()));
    }
    let gl = GaussLegendre::new(8);
    let vals: Vec<Result<f64>> = split(rng, n_paths)
        .into_par_iter()
        .map(|mut r| {
            let x0 = sample_categorical(&p0.values, &mut r);
            let path = gillespie_sample(family, x0, horizon, &mut r)?;
            let mut acc = 0.0;
            for (a, b, x) in path.segments() {
                if b <= a {
                    continue;
                }
                for (t, w) in gl.on_interval(a, b) {
                    acc += w * family.at(t).kl_path_integrand(&s_true.score(t), &s_hat.score(t), x)?;
                }
            }
            Ok(acc)
        })
        .collect();
    let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(McEstimate::from_samples(&vals))
}

/// KL between the two backward chains discretized on `steps` equal intervals
/// with first-order transition kernels `P(y|x) = h Λ̄(y, x)`,
/// `P(x|x) = 1 - h Σ_y Λ̄(y, x)`, rates frozen at interval midpoints.
/// The result converges to the path KL at rate `O(h)`.
pub fn discretized_path_kl<F, S, H>(
    family: &F,
    s_true: &S,
    s_hat: &H,
    p0: &DensityVector,
    horizon: f64,
    steps: usize,
) -> Result<f64>
where
    F: RateFamily + ?Sized,
    S: ScoreProvider + ?Sized,
    H: ScoreProvider + ?Sized,
{
    if steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    let h = horizon / steps as f64;
    let n = family.size();
    let mut p = DensityVector { values: p0.values.clone(), time: 0.0 };
    let mut total = 0.0;
    for k in 0..steps {
        let t = (k as f64 + 0.5) * h;
        p = evolve_density(family, &p, t)?;
        let rm = family.at(t);
        let (s, sh) = (s_true.score(t), s_hat.score(t));
        for x in 0..n {
            if p.values[x] <= 0.0 {
                continue;
            }
            let (mut out, mut out_hat, mut jumps) = (0.0, 0.0, 0.0);
            for y in 0..n {
                let lam = if y == x { 0.0 } else { rm.intensity(x, y) };
                if lam == 0.0 {
                    continue;
                }
                let a = s.get(x, y) * lam;
                let b = sh.get(x, y) * lam;
                out += a;
                out_hat += b;
                jumps += h * a * (a / b).ln();
            }
            let (stay, stay_hat) = (1.0 - h * out, 1.0 - h * out_hat);
            if stay <= 0.0 || stay_hat <= 0.0 {
                return Err(Error::Domain(format!("step {h} too coarse for exit rate {}", out.max(out_hat))));
            }
            total += p.values[x] * (jumps + stay * (stay / stay_hat).ln());
        }
    }
    Ok(total)
}

/// Richardson extrapolation `2 K(h/2) - K(h)` of [`discretized_path_kl`].
pub fn discretized_path_kl_extrapolated<F, S, H>(
    family: &F,
    s_true: &S,
    s_hat: &H,
    p0: &DensityVector,
    horizon: f64,
    steps: usize,
) -> Result<f64>
where
    F: RateFamily + ?Sized,
    S: ScoreProvider + ?Sized,
    H: ScoreProvider + ?Sized,
{
    let coarse = discretized_path_kl(family, s_true, s_hat, p0, horizon, steps)?;
    let fine = discretized_path_kl(family, s_true, s_hat, p0, horizon, 2 * steps)?;
    Ok(2.0 * fine - coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{ConstantRate, FixedScore};

    #[test]
    fn exact_score_gives_zero() {
        let rm = RateMatrix::from_intensity(3, |y, x| 0.2 + 0.3 * ((x + y) % 2) as f64).unwrap();
        let fam = ConstantRate(rm);
        let p0 = DensityVector::new(vec![0.6, 0.3, 0.1], 0.0).unwrap();
        let s = FixedScore(ScoreTable::ones(3));
        assert_eq!(exact_path_kl(&fam, &s, &s, &p0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn mc_estimate_stats() {
        let e = McEstimate::from_samples(&[1.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.std_err - 1.0).abs() < 1e-15);
    }
}

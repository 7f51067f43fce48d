use rand::Rng;
use rayon::prelude::*;

use super::conditional::DiscreteConditional;
use crate::error::{Error, Result};
use crate::generator::{RateFamily, RateMatrix, ScoreProvider};
use crate::quadrature::GaussLegendre;
use crate::rng::split;
use crate::time::TimeDistribution;

/// One term of the discrete score-matching objective:
/// `Σ_{y≠x_t} (ŝ(x_t, y) - ratio(y) log ŝ(x_t, y)) λ(x_t, y)` with
/// `ratio(y) = p_{t|0}(y | x0) / p_{t|0}(x_t | x0)`.
///
/// `cond_row` is `p_{t|0}(· | x0)`, `score_row` is `ŝ(x_t, ·)`. Only the
/// support of `λ(x_t, ·)` is visited.
pub fn discrete_sm_term(rm: &RateMatrix, cond_row: &[f64], xt: usize, score_row: &[f64]) -> Result<f64> {
    let denom = cond_row[xt];
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("sampled state {xt} has zero conditional mass")));
    }
    let mut acc = 0.0;
    for y in 0..rm.size() {
        if y == xt {
            continue;
        }
        let lam = rm.intensity(xt, y);
        if lam == 0.0 {
            continue;
        }
        let sh = score_row[y];
        if !(sh > 0.0) {
            return Err(Error::NonPositiveScore { x: xt, y, value: sh });
        }
        acc += (sh - cond_row[y] / denom * sh.ln()) * lam;
    }
    Ok(acc)
}

/// Derivative of [`discrete_sm_term`] with respect to each `ŝ(x_t, y)`.
pub fn discrete_sm_term_grad(rm: &RateMatrix, cond_row: &[f64], xt: usize, score_row: &[f64]) -> Vec<f64> {
    let denom = cond_row[xt];
    (0..rm.size())
        .map(|y| {
            let lam = if y == xt { 0.0 } else { rm.intensity(xt, y) };
            if lam == 0.0 {
                0.0
            } else {
                lam * (1.0 - cond_row[y] / denom / score_row[y])
            }
        })
        .collect()
}

fn row(score: &dyn ScoreProvider, t: f64, x: usize) -> Vec<f64> {
    let table = score.score(t);
    (0..table.size()).map(|y| table.get(x, y)).collect()
}

/// Monte Carlo estimate of the discrete score-matching loss over `batch`
/// draws of `(x0, t, x_t)`; `x0` is drawn uniformly from the multiset `data`.
/// Samples use split streams and are summed in index order.
#[allow(clippy::too_many_arguments)]
pub fn discrete_sm_loss<F, C>(
    score: &dyn ScoreProvider,
    cond: &C,
    data: &[usize],
    family: &F,
    psi: &TimeDistribution,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<f64>
where
    F: RateFamily + ?Sized,
    C: DiscreteConditional + ?Sized,
{
    if data.is_empty() || batch == 0 {
        return Err(Error::Domain("loss needs a nonempty dataset and batch".into()));
    }
    let streams = split(rng, batch);
    let terms: Vec<Result<f64>> = streams
        .into_par_iter()
        .map(|mut r| {
            let x0 = data[r.random_range(0..data.len())];
            let t = psi.sample(&mut r);
            let xt = cond.sample(x0, t, &mut r)?;
            let c = cond.distribution(x0, t)?;
            discrete_sm_term(&family.at(t), &c, xt, &row(score, t, xt))
        })
        .collect();
    let mut sum = 0.0;
    for term in terms {
        sum += term?;
    }
    Ok(sum / batch as f64)
}

/// The same objective evaluated exactly: enumerate `x0` over `data`, `x_t` over
/// the state space, and integrate `t` against the density of `psi` with
/// `panels` Gauss–Legendre panels.
pub fn discrete_sm_loss_exact<F, C>(
    score: &dyn ScoreProvider,
    cond: &C,
    data: &[usize],
    family: &F,
    psi: &TimeDistribution,
    panels: usize,
) -> Result<f64>
where
    F: RateFamily + ?Sized,
    C: DiscreteConditional + ?Sized,
{
    if data.is_empty() {
        return Err(Error::Domain("loss needs a nonempty dataset".into()));
    }
    let (lo, hi) = psi.bounds();
    let gl = GaussLegendre::new(32);
    let w0 = 1.0 / data.len() as f64;
    let mut total = 0.0;
    for (t, wt) in gl.composite(lo, hi, panels) {
        let rm = family.at(t);
        let table = score.score(t);
        let mut inner = 0.0;
        for &x0 in data {
            let c = cond.distribution(x0, t)?;
            for xt in 0..c.len() {
                if c[xt] <= 0.0 {
                    continue;
                }
                let srow: Vec<f64> = (0..table.size()).map(|y| table.get(xt, y)).collect();
                inner += w0 * c[xt] * discrete_sm_term(&rm, &c, xt, &srow)?;
            }
        }
        total += wt * psi.density(t) * inner;
    }
    Ok(total)
}

use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::fourier::ContinuousPart;
use super::intensity::JumpPotential;
use super::{forward_jump_sample, wrap, Point, TorusJumpSpec};
use crate::error::{Error, Result};
use crate::rng::split;
use crate::time::TimeDistribution;

/// Denominators below this are treated as underflow and the draw is repeated.
const RATIO_FLOOR: f64 = 1e-250;
const MAX_REDRAWS: usize = 100;

/// One Monte Carlo draw of the jump score-matching objective.
///
/// `ys` are `m` kernel draws around `x_t` with their conditional ratios
/// `p_{t|0}(y | x0) / p_{t|0}(x_t | x0)`. When at least one jump occurred the
/// transition law's atom at `x0` contributes the extra term
/// `-w log ŝ(x_t, x0)` with `w = e^{-tM} λ(x_t - x0) / c_t(x_t - x0)`; without
/// it the objective's minimizer would miss the atom in `p_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSample {
    pub t: f64,
    pub x0: Point,
    pub xt: Point,
    pub jumped: bool,
    pub ys: Vec<Point>,
    pub ratios: Vec<f64>,
    pub atom_weight: f64,
}

fn delta(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

/// Draws `t ~ Ψ`, `x_t ~ p_{t|0}(· | x0)` and `inner` kernel points around `x_t`.
pub fn draw_jump_sample(
    spec: &TorusJumpSpec,
    x0: Point,
    psi: &TimeDistribution,
    inner: usize,
    rng: &mut dyn RngCore,
) -> Result<JumpSample> {
    if inner == 0 {
        return Err(Error::Domain("need at least one inner kernel draw".into()));
    }
    for _ in 0..MAX_REDRAWS {
        let t = psi.sample(rng);
        let (xt, count) = forward_jump_sample(spec, x0, t, rng)?;
        let ys: Vec<Point> = (0..inner).map(|_| spec.propose(xt, rng)).collect();
        if count == 0 {
            return Ok(JumpSample { t, x0, xt, jumped: false, ratios: vec![0.0; inner], ys, atom_weight: 0.0 });
        }
        let part = ContinuousPart::new(spec, t);
        let den = part.eval(delta(xt, x0));
        if !(den > RATIO_FLOOR) || !den.is_finite() {
            log::warn!("conditional density underflow at t = {t}, x_t = {xt:?}; redrawing");
            continue;
        }
        let ratios = ys.iter().map(|y| part.eval(delta(*y, x0)).max(0.0) / den).collect();
        let atom_weight = (-t * spec.mass).exp() * spec.kernel(delta(xt, x0)) / den;
        return Ok(JumpSample { t, x0, xt, jumped: true, ys, ratios, atom_weight });
    }
    Err(Error::NonFinite(format!("conditional density kept underflowing from x0 = {x0:?}")))
}

/// Loss of one draw given potential values `g(x_t)`, `g(y_j)` and `g(x0)`:
/// `(M/m) Σ_j (e^{g(y_j) - g(x_t)} - r_j (g(y_j) - g(x_t))) - w (g(x0) - g(x_t))`.
pub fn jump_term(spec: &TorusJumpSpec, s: &JumpSample, g_xt: f64, g_ys: &[f64], g_x0: f64) -> f64 {
    let c = spec.mass / s.ys.len() as f64;
    let inner: f64 = g_ys.iter().zip(&s.ratios).map(|(g, r)| (g - g_xt).exp() - r * (g - g_xt)).sum();
    c * inner - s.atom_weight * (g_x0 - g_xt)
}

/// Gradient of [`jump_term`] with respect to `(g(x_t), g(y_1..m), g(x0))`.
pub fn jump_term_grad(spec: &TorusJumpSpec, s: &JumpSample, g_xt: f64, g_ys: &[f64]) -> (f64, Vec<f64>, f64) {
    let c = spec.mass / s.ys.len() as f64;
    let d_ys: Vec<f64> = g_ys.iter().zip(&s.ratios).map(|(g, r)| c * ((g - g_xt).exp() - r)).collect();
    let d_xt = -d_ys.iter().sum::<f64>() + s.atom_weight;
    (d_xt, d_ys, -s.atom_weight)
}

/// Monte Carlo estimate of the jump score-matching loss with `batch` draws,
/// `x0` uniform over `data`, each inner integral importance-sampled with
/// `inner` kernel draws.
pub fn jump_sm_loss<P: JumpPotential + ?Sized>(
    spec: &TorusJumpSpec,
    potential: &P,
    data: &[Point],
    psi: &TimeDistribution,
    batch: usize,
    inner: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if data.is_empty() || batch == 0 {
        return Err(Error::Domain("loss needs a nonempty dataset and batch".into()));
    }
    let terms: Vec<Result<f64>> = split(rng, batch)
        .into_par_iter()
        .map(|mut r| {
            let x0 = data[r.random_range(0..data.len())];
            let x0 = [wrap(x0[0]), wrap(x0[1])];
            let s = draw_jump_sample(spec, x0, psi, inner, &mut r)?;
            let g_xt = potential.potential(s.t, s.xt);
            let g_ys = potential.potential_batch(s.t, &s.ys);
            let g_x0 = potential.potential(s.t, s.x0);
            Ok(jump_term(spec, &s, g_xt, &g_ys, g_x0))
        })
        .collect();
    let mut sum = 0.0;
    for t in terms {
        sum += t?;
    }
    Ok(sum / batch as f64)
}

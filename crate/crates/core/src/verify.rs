//! Oracle suites run by `dmm verify`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffusion::{GbmSpec, Ou};
use crate::error::{Error, Result};
use crate::finite::{
    evolve_density, exact_path_kl_marginal, kl_divergence, BackwardFamily, ChainKind, DensityPath, DiscreteSpace,
    MarginalScore,
};
use crate::generator::{ConstantRate, DensityVector, FixedScore, RateMatrix, ScoreTable};
use crate::jump::{grid_points, ConvolutionField, Point, TorusJumpSpec};
use crate::nn::{Activation, Embedding, ScoreNet};
use crate::time::TimeDistribution;
use crate::train::{
    DiffusionEngine, DiffusionKind, DiffusionPrior, Engine, FiniteEngine, GbmPrior, JumpEngine, NetConfig,
};

pub const SUITES: &[&str] = &["reversal", "cor1", "quadrature", "gradients", "reuse"];

pub const REVERSAL_TOL: f64 = 1e-6;
pub const COR1_TOL: f64 = 1e-8;
pub const QUADRATURE_TOL: f64 = 1e-6;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const REUSE_TOL: f64 = 1e-12;

/// One named invariant, `value` its worst observed deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub instances: usize,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64, instances: usize) -> Self {
        Self { name: name.into(), passed: value <= tolerance, value, tolerance, instances }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Runs the named suite. Unknown names are a [`Error::Config`].
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = match name {
        "reversal" => vec![reversal(&mut rng, 50)?],
        "cor1" => vec![cor1(&mut rng, 100)?],
        "quadrature" => quadrature(&mut rng, 20)?,
        "gradients" => gradients(&mut rng)?,
        "reuse" => reuse(&mut rng, 20)?,
        other => return Err(Error::Config(format!("unknown suite {other:?}; known suites: {}", SUITES.join(", ")))),
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { suite: name.to_string(), seed, passed, checks })
}

/// Random rate matrix on `n` states with off-diagonal intensities in `[0.1, 2)`.
pub fn random_rate(n: usize, rng: &mut impl Rng) -> RateMatrix {
    RateMatrix::from_intensity(n, |_, _| rng.random_range(0.1..2.0)).expect("positive intensities")
}

/// Random strictly positive probability vector.
pub fn random_density(n: usize, rng: &mut impl Rng) -> DensityVector {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    DensityVector { values: w.into_iter().map(|v| v / s).collect(), time: 0.0 }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Backward chain from exact marginal ratios, started at `p_T`, against the
/// forward marginals read in reverse.
fn reversal(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(3..=5);
        let horizon = 1.0;
        let family = ConstantRate(random_rate(n, rng));
        let p0 = random_density(n, rng);
        let path = DensityPath::solve(&family, &p0, horizon, 400)?;
        let score = MarginalScore { path: &path };
        let back = BackwardFamily { forward: &family, score: &score, horizon };
        let mut q = evolve_density(&family, &p0, horizon)?;
        q.time = 0.0;
        for k in 1..=4 {
            let tau = k as f64 * horizon / 4.0;
            q = evolve_density(&back, &q, tau)?;
            let p = evolve_density(&family, &p0, horizon - tau)?;
            worst = worst.max(max_abs_diff(&q.values, &p.values));
        }
    }
    Ok(Check::at_most("backward marginals match reversed forward marginals (max abs)", worst, REVERSAL_TOL, instances))
}

/// Random positive score table with unit diagonal and entries in `[0.2, 5)`.
pub fn random_score(n: usize, rng: &mut impl Rng) -> Result<ScoreTable> {
    let ratios = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { rng.random_range(0.2..5.0) }).collect();
    ScoreTable::new(n, ratios)
}

/// `KL(p_0 ‖ q_T) ≤ KL(p_T ‖ q_0) + 𝔏` for random chains, laws and scores.
fn cor1(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let n = rng.random_range(3..=5);
        let horizon = rng.random_range(0.5..2.0);
        let family = ConstantRate(random_rate(n, rng));
        let p0 = random_density(n, rng);
        let q0 = random_density(n, rng);
        let s_hat = FixedScore(random_score(n, rng)?);
        let p_t = evolve_density(&family, &p0, horizon)?;
        let truncation = kl_divergence(&p_t.values, &q0.values)?;
        let path_kl = exact_path_kl_marginal(&family, &s_hat, &p0, horizon)?;
        let back = BackwardFamily { forward: &family, score: &s_hat, horizon };
        let q_t = evolve_density(&back, &q0, horizon)?;
        let lhs = kl_divergence(&p0.values, &q_t.values)?;
        worst = worst.max(lhs - truncation - path_kl);
    }
    Ok(Check::at_most("bound excess KL(p0|qT) - KL(pT|q0) - path KL", worst, COR1_TOL, instances))
}

/// Random trigonometric potential with `terms` modes of degree at most 3.
pub fn random_trig_potential(terms: usize, rng: &mut impl Rng) -> impl Fn(Point) -> f64 + Sync {
    let coef: Vec<(f64, f64, f64, f64)> = (0..terms)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(-3..=3) as f64,
                rng.random_range(-3..=3) as f64,
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    move |x: Point| coef.iter().map(|(a, k1, k2, ph)| a * (2.0 * PI * (k1 * x[0] + k2 * x[1]) + ph).cos()).sum()
}

fn random_field(spec: &TorusJumpSpec, rng: &mut ChaCha8Rng, version: u64) -> Result<ConvolutionField> {
    let g_fn = random_trig_potential(4, rng);
    let g: Vec<f64> = grid_points(spec.grid).into_iter().map(&g_fn).collect();
    ConvolutionField::from_grid(spec, g, rng.random_range(0.01..4.0), version)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// FFT convolution against the brute-force Riemann sum, on and off the grid.
fn quadrature(rng: &mut ChaCha8Rng, instances: usize) -> Result<Vec<Check>> {
    let spec = TorusJumpSpec::default();
    let n = spec.grid;
    let pts = grid_points(n);
    let kernel: Vec<f64> = pts.iter().map(|d| spec.kernel(*d)).collect();
    let h = 1.0 / (n * n) as f64;
    let (mut on_grid, mut off_grid) = (0.0_f64, 0.0_f64);
    for v in 0..instances {
        let field = random_field(&spec, rng, v as u64)?;
        let w: Vec<f64> = field.g.iter().map(|g| (g - field.g_max).exp()).collect();
        for i in 0..n * n {
            let (i1, i2) = (i / n, i % n);
            let mut c = 0.0;
            for (j, wj) in w.iter().enumerate() {
                let (d1, d2) = (((j / n) + n - i1) % n, ((j % n) + n - i2) % n);
                c += wj * kernel[d1 * n + d2];
            }
            let brute = h * c * (field.g_max - field.g[i]).exp();
            on_grid = on_grid.max(rel_err(field.intensity_at_index(i), brute));
        }
        for _ in 0..16 {
            let x: Point = [rng.random(), rng.random()];
            let brute: f64 = h * pts.iter().zip(&w).map(|(y, wj)| wj * spec.kernel([y[0] - x[0], y[1] - x[1]])).sum::<f64>();
            off_grid = off_grid.max(rel_err(field.conv_at(x), brute));
        }
    }
    Ok(vec![
        Check::at_most("FFT intensity vs Riemann sum on the grid (max rel)", on_grid, QUADRATURE_TOL, instances),
        Check::at_most("interpolated convolution vs Riemann sum off the grid (max rel)", off_grid, QUADRATURE_TOL, instances),
    ])
}

/// Reference-integral reuse against direct evaluation, and staleness detection.
fn reuse(rng: &mut ChaCha8Rng, instances: usize) -> Result<Vec<Check>> {
    let spec = TorusJumpSpec::default();
    let n = spec.grid;
    let mut worst = 0.0_f64;
    let mut stale_caught = 0usize;
    for v in 0..instances {
        let field = random_field(&spec, rng, v as u64)?;
        let r = field.reference(rng.random_range(0..n * n));
        for x in 0..n * n {
            worst = worst.max(rel_err(r.reuse(&field, x)?, field.intensity_at_index(x)));
        }
        let newer = ConvolutionField::from_grid(&spec, field.g.clone(), field.t, v as u64 + 1000)?;
        if matches!(r.reuse(&newer, 0), Err(Error::StaleReference { .. })) {
            stale_caught += 1;
        }
    }
    Ok(vec![
        Check::at_most("reused vs direct intensity on the grid (max rel)", worst, REUSE_TOL, instances),
        Check::at_most("stale references accepted", (instances - stale_caught) as f64, 0.0, instances),
    ])
}

/// Denominator floor of the per-coordinate gradient comparison, relative to the
/// largest gradient entry.
pub const GRADIENT_FLOOR: f64 = 1e-3;

/// Worst per-coordinate and directional relative error between the analytic
/// gradient and central differences of the same seeded batch loss.
pub fn gradient_error<E: Engine>(
    engine: &E,
    net: &ScoreNet,
    psi: &TimeDistribution,
    batch: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let rng0 = ChaCha8Rng::seed_from_u64(seed);
    let (_, grad) = engine.loss_and_grad(net, psi, batch, &mut rng0.clone())?;
    let p0 = net.params().to_vec();
    let mut work = net.clone();
    let mut loss_at = |p: &[f64]| -> Result<f64> {
        work.set_params(p)?;
        Ok(engine.loss_and_grad(&work, psi, batch, &mut rng0.clone())?.0)
    };
    let scale = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    let mut coord = 0.0_f64;
    let mut p = p0.clone();
    for i in 0..p0.len() {
        let h = 1e-5 * p0[i].abs().max(1.0);
        p[i] = p0[i] + h;
        let up = loss_at(&p)?;
        p[i] = p0[i] - h;
        let down = loss_at(&p)?;
        p[i] = p0[i];
        let fd = (up - down) / (2.0 * h);
        let den = grad[i].abs().max(fd.abs()).max(GRADIENT_FLOOR * scale).max(f64::MIN_POSITIVE);
        coord = coord.max((grad[i] - fd).abs() / den);
    }
    let mut dir_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let v: Vec<f64> = (0..p0.len()).map(|_| dir_rng.random_range(-1.0..1.0)).collect();
    let h = 1e-5;
    let shifted = |s: f64| -> Vec<f64> { p0.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
    let fd = (loss_at(&shifted(h))? - loss_at(&shifted(-h))?) / (2.0 * h);
    let an: f64 = grad.iter().zip(&v).map(|(a, b)| a * b).sum();
    let directional = rel_err(an, fd);
    Ok((coord, directional))
}

/// Network with about twenty parameters for an engine.
pub fn mini_net<E: Engine>(engine: &E, hidden: usize, rng: &mut ChaCha8Rng) -> Result<ScoreNet> {
    let cfg = NetConfig { hidden, layers: 2, activation: Activation::Tanh, time_frequencies: 1 };
    let emb: Embedding = engine.embedding(&cfg);
    ScoreNet::init(emb, hidden, 2, engine.output_dim(), Activation::Tanh, rng)
}

/// Gradient check of one engine for a seed: coordinate error, directional
/// error and parameter count.
pub type GradientCase = Box<dyn Fn(u64) -> Result<(f64, f64, usize)>>;

/// One small instance of every engine's loss, keyed by name.
pub fn gradient_cases(rng: &mut ChaCha8Rng) -> Result<Vec<(&'static str, GradientCase)>> {
    let horizon = 1.0;
    let psi = TimeDistribution::Uniform { lo: 0.05, hi: horizon };
    let mut cases: Vec<(&'static str, GradientCase)> = Vec::new();

    let uni = FiniteEngine::new(DiscreteSpace::new(1, 3, false)?, ChainKind::Uniform, vec![0, 1, 1, 2], horizon)?;
    let net = mini_net(&uni, 2, rng)?;
    let p = psi;
    cases.push(("finite uniform", Box::new(move |s| wrap_case(&uni, &net, &p, s))));

    let space = DiscreteSpace::new(1, 3, true)?;
    let masked = FiniteEngine::new(space, ChainKind::Masked, vec![1, 2, 3, 3], horizon)?;
    let net = mini_net(&masked, 2, rng)?;
    let p = psi;
    cases.push(("finite masked", Box::new(move |s| wrap_case(&masked, &net, &p, s))));

    let data: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
    let ou = DiffusionEngine::new(DiffusionKind::Ou(Ou { dim: 1 }), data, horizon, DiffusionPrior::StandardNormal)?;
    let net = mini_net(&ou, 3, rng)?;
    let p = psi;
    cases.push(("ou", Box::new(move |s| wrap_case(&ou, &net, &p, s))));

    let data: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.random_range(0.5..3.0)]).collect();
    let gbm = DiffusionEngine::gbm(GbmSpec::scalar(0.6)?, GbmPrior::LogNormalFit, data, horizon)?;
    let net = mini_net(&gbm, 3, rng)?;
    let p = psi;
    cases.push(("gbm", Box::new(move |s| wrap_case(&gbm, &net, &p, s))));

    let data: Vec<Point> = (0..16).map(|_| [rng.random(), rng.random()]).collect();
    let jump = JumpEngine::new(TorusJumpSpec::default(), data, horizon, 3, 1)?;
    let net = mini_net(&jump, 2, rng)?;
    let p = psi;
    cases.push(("torus jump", Box::new(move |s| wrap_case(&jump, &net, &p, s))));
    Ok(cases)
}

fn wrap_case<E: Engine>(engine: &E, net: &ScoreNet, psi: &TimeDistribution, seed: u64) -> Result<(f64, f64, usize)> {
    let (c, d) = gradient_error(engine, net, psi, 8, seed)?;
    Ok((c, d, net.params().len()))
}

fn gradients(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, case) in gradient_cases(rng)? {
        let seed = rng.random();
        let (coord, dir, params) = case(seed)?;
        out.push(Check::at_most(format!("{name} loss, {params} parameters, per coordinate"), coord, GRADIENT_TOL, 1));
        out.push(Check::at_most(format!("{name} loss, {params} parameters, directional"), dir, GRADIENT_TOL, 1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("nope", 0), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_suite_passes() {
        let r = run_suite("gradients", 3).unwrap();
        assert!(r.passed, "{r:#?}");
    }
}

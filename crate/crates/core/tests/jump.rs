mod common;

use std::f64::consts::PI;

use common::{chi2_quantile, rel_err};
use dmm::data::{histogram_tv, TargetSpec};
use dmm::finite::McEstimate;
use dmm::jump::{
    backward_jump_step, draw_jump_sample, forward_jump_sample, grid_points, jump_term, jump_term_grad,
    wrap_delta, SUP_SAFETY, ContinuousPart, ConvolutionField, GridPotential, JumpStepStats, Point, TorusConditional,
    TorusJumpSpec,
};
use dmm::rng::seeded;
use dmm::time::{TimeDistribution, TimeGrid};
use dmm::train::{infer, JumpEngine};
use proptest::prelude::*;
use rand::{Rng, RngCore};

/// Wrapped 1-D Gaussian density, summed over images.
fn wrapped(sigma: f64, d: f64) -> f64 {
    (-20..=20)
        .map(|k| {
            let u = d + k as f64;
            (-u * u / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
        })
        .sum()
}

fn kernel(spec: &TorusJumpSpec, d: Point) -> f64 {
    spec.mass * wrapped(spec.sigma, d[0]) * wrapped(spec.sigma, d[1])
}

#[test]
fn jump_count_is_poisson() {
    let spec = TorusJumpSpec::default();
    let t = 0.7;
    let n = 100_000;
    let mut rng = seeded(41);
    let total: u64 = (0..n).map(|_| forward_jump_sample(&spec, [0.2, 0.4], t, &mut rng).unwrap().1).sum();
    let mean = total as f64 / n as f64;
    let lam = t * spec.mass;
    assert!((mean - lam).abs() <= 3.0 * (lam / n as f64).sqrt(), "{mean} vs {lam}");
}

#[test]
fn long_run_is_uniform() {
    let spec = TorusJumpSpec::default();
    let n = 100_000;
    let bins = 32;
    let mut rng = seeded(42);
    let mut counts = vec![0.0; bins * bins];
    for _ in 0..n {
        let (x, _) = forward_jump_sample(&spec, [0.5, 0.5], 20.0, &mut rng).unwrap();
        counts[((x[0] * bins as f64) as usize) * bins + (x[1] * bins as f64) as usize] += 1.0;
    }
    let e = n as f64 / (bins * bins) as f64;
    let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
    let crit = chi2_quantile((bins * bins - 1) as f64, 2.326_347_874);
    assert!(chi2 < crit, "χ² = {chi2} above the 1% point {crit}");
}

#[test]
fn small_time_density_matches_two_term_series() {
    let spec = TorusJumpSpec::default();
    let t = 0.01;
    let part = ContinuousPart::new(&spec, t);
    let m = spec.mass;
    let s2 = (2.0f64).sqrt() * spec.sigma;
    for k in 0..200 {
        let d = [k as f64 / 200.0 - 0.5, 0.37 * (k as f64 / 200.0 - 0.5)];
        let one = t * kernel(&spec, d);
        let two = 0.5 * t * t * m * m * wrapped(s2, d[0]) * wrapped(s2, d[1]);
        let series = (-t * m).exp() * (one + two);
        assert!((part.eval(d) - series).abs() < 1e-4, "δ = {d:?}: {} vs {series}", part.eval(d));
    }
}

#[test]
fn long_time_density_is_flat() {
    let spec = TorusJumpSpec::default();
    let c = TorusConditional::new(&spec, [0.1, 0.9], 30.0).unwrap();
    assert!(c.grid.iter().all(|v| (v - 1.0).abs() < 1e-9));
}

#[test]
fn conditional_density_matches_forward_histogram() {
    let spec = TorusJumpSpec::default();
    let (x0, t) = ([0.3, 0.6], 0.5);
    let n = 100_000;
    let bins = 8;
    let mut rng = seeded(43);
    let mut counts = vec![0.0; bins * bins];
    for _ in 0..n {
        let (x, _) = forward_jump_sample(&spec, x0, t, &mut rng).unwrap();
        counts[((x[0] * bins as f64) as usize) * bins + (x[1] * bins as f64) as usize] += 1.0;
    }
    let cond = TorusConditional::new(&spec, x0, t).unwrap();
    let sub = 16;
    let h = 1.0 / (bins * sub) as f64;
    for bi in 0..bins {
        for bj in 0..bins {
            let mut mass = 0.0;
            for a in 0..sub {
                for b in 0..sub {
                    let p = [(bi * sub + a) as f64 * h + h / 2.0, (bj * sub + b) as f64 * h + h / 2.0];
                    mass += cond.density(p) * h * h;
                }
            }
            if (x0[0] * bins as f64) as usize == bi && (x0[1] * bins as f64) as usize == bj {
                mass += cond.atom;
            }
            let e = n as f64 * mass;
            let sd = (n as f64 * mass * (1.0 - mass)).sqrt();
            let c = counts[bi * bins + bj];
            assert!((c - e).abs() <= 3.0 * sd, "bin ({bi}, {bj}): {c} vs {e} ± {sd}");
        }
    }
}

/// With `g = log c_t(· - x0)` the draw's inner estimate is an importance-sampled
/// `∫ (b - b log b) λ(y - x_t) dy`, `b` the conditional ratio.
#[test]
fn loss_at_true_ratio_matches_quadrature() {
    let spec = TorusJumpSpec::default();
    let x0 = [0.4, 0.55];
    let psi = TimeDistribution::Uniform { lo: 0.6, hi: 0.6 + 1e-12 };
    let mut rng = seeded(44);
    let s = loop {
        let s = draw_jump_sample(&spec, x0, &psi, 200_000, &mut rng).unwrap();
        if s.jumped {
            break s;
        }
    };
    let part = ContinuousPart::new(&spec, s.t);
    let g = |y: Point| part.eval([y[0] - x0[0], y[1] - x0[1]]).ln();
    let g_xt = g(s.xt);
    let g_ys: Vec<f64> = s.ys.iter().map(|y| g(*y)).collect();
    let per: Vec<f64> = g_ys
        .iter()
        .zip(&s.ratios)
        .map(|(gy, r)| spec.mass * ((gy - g_xt).exp() - r * (gy - g_xt)))
        .collect();
    let est = McEstimate::from_samples(&per);
    let lib = jump_term(&spec, &s, g_xt, &g_ys, g_xt);
    assert!(rel_err(lib, est.mean) < 1e-10);
    let den = part.eval([s.xt[0] - x0[0], s.xt[1] - x0[1]]);
    let n = 256;
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            let b = part.eval([y[0] - x0[0], y[1] - x0[1]]) / den;
            quad += (b - b * b.ln()) * kernel(&spec, [wrap_delta(y[0] - s.xt[0]), wrap_delta(y[1] - s.xt[1])]);
        }
    }
    quad /= (n * n) as f64;
    assert!((est.mean - quad).abs() <= 3.0 * est.std_err, "{} ± {} vs {quad}", est.mean, est.std_err);
}

/// Derivative of the loss along the indicator of a coarse cell far from `x0`,
/// at `g = log c_t(· - x0)`. The continuous part cancels exactly; what remains
/// is the contribution of the no-jump atom,
/// `E_t e^{-tM} ∫_cell λ(z - x0) (c_t(z - x0) / c_t(0) + 1) dz`.
/// A shifted cell value produces a clearly larger slope.
#[test]
fn loss_gradient_on_far_cells_is_the_atom_residual() {
    let spec = TorusJumpSpec::default();
    let x0 = [0.1, 0.1];
    let psi = TimeDistribution::Uniform { lo: 0.8, hi: 1.2 };
    let cells = 8;
    let cell_of = |p: Point| ((p[0] * cells as f64) as usize, (p[1] * cells as f64) as usize);
    let targets = [(4usize, 4usize), (5, 2), (3, 6)];
    let n = 40_000;
    let mut rng = seeded(45);
    let draws: Vec<_> = (0..n).map(|_| draw_jump_sample(&spec, x0, &psi, 16, &mut rng).unwrap()).collect();
    let residual = |cell: (usize, usize)| {
        let (nt, sub) = (20, 16);
        let h = 1.0 / (cells * sub) as f64;
        let mut acc = 0.0;
        for k in 0..nt {
            let t = 0.8 + 0.4 * (k as f64 + 0.5) / nt as f64;
            let part = ContinuousPart::new(&spec, t);
            let c0 = part.eval([0.0, 0.0]);
            let mut inner = 0.0;
            for a in 0..sub {
                for b in 0..sub {
                    let z = [(cell.0 * sub + a) as f64 * h + h / 2.0, (cell.1 * sub + b) as f64 * h + h / 2.0];
                    let d = [z[0] - x0[0], z[1] - x0[1]];
                    inner += kernel(&spec, d) * (part.eval(d) / c0 + 1.0) * h * h;
                }
            }
            acc += (-t * spec.mass).exp() * inner / nt as f64;
        }
        acc
    };
    for (shift, expect_zero) in [(0.0, true), (0.7, false)] {
        for &cell in &targets {
            let per: Vec<f64> = draws
                .iter()
                .map(|s| {
                    let part = ContinuousPart::new(&spec, s.t);
                    let g = |y: Point| {
                        let v = part.eval([y[0] - x0[0], y[1] - x0[1]]).ln();
                        if cell_of(y) == cell {
                            v + shift
                        } else {
                            v
                        }
                    };
                    let (d_xt, d_ys, _) = jump_term_grad(&spec, s, g(s.xt), &s.ys.iter().map(|y| g(*y)).collect::<Vec<_>>());
                    let mut d = if cell_of(s.xt) == cell { d_xt } else { 0.0 };
                    for (y, dy) in s.ys.iter().zip(&d_ys) {
                        if cell_of(*y) == cell {
                            d += dy;
                        }
                    }
                    d
                })
                .collect();
            let est = McEstimate::from_samples(&per);
            let r = residual(cell);
            if expect_zero {
                assert!((est.mean - r).abs() <= 3.0 * est.std_err, "cell {cell:?}: {} ± {} vs {r}", est.mean, est.std_err);
            } else {
                assert!(est.mean - r > 5.0 * est.std_err, "cell {cell:?}: {} ± {} vs {r}", est.mean, est.std_err);
            }
        }
    }
}

#[test]
fn single_mode_perturbation() {
    let spec = TorusJumpSpec::default();
    let eps = 1e-3;
    let field = ConvolutionField::build(&spec, &|_t: f64, y: Point| eps * (2.0 * PI * y[0]).cos(), 0.5).unwrap();
    let lam1 = spec.mass * (-2.0 * PI * PI * spec.sigma * spec.sigma).exp();
    for (i, x) in grid_points(spec.grid).iter().enumerate() {
        let first = spec.mass + eps * (2.0 * PI * x[0]).cos() * (lam1 - spec.mass);
        assert!((field.intensity_at_index(i) - first).abs() <= 2.0 * spec.mass * eps * eps);
    }
}

#[test]
fn fft_matches_brute_force_riemann_sum() {
    let spec = TorusJumpSpec::default();
    let n = spec.grid;
    let pts = grid_points(n);
    let mut rng = seeded(46);
    for _ in 0..3 {
        let g: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = ConvolutionField::from_grid(&spec, g.clone(), 0.3, 7).unwrap();
        for _ in 0..40 {
            let i = rng.random_range(0..n * n);
            let brute: f64 = (0..n * n)
                .map(|j| (g[j] - g[i]).exp() * kernel(&spec, [pts[j][0] - pts[i][0], pts[j][1] - pts[i][1]]))
                .sum::<f64>()
                / (n * n) as f64;
            assert!(rel_err(field.intensity_at_index(i), brute) < 1e-6);
        }
    }
}

#[test]
fn reference_reuse_is_exact_on_the_grid() {
    let spec = TorusJumpSpec::default();
    let mut rng = seeded(47);
    let g: Vec<f64> = (0..spec.grid * spec.grid).map(|_| rng.random_range(-2.0..2.0)).collect();
    let field = ConvolutionField::from_grid(&spec, g, 0.3, 9).unwrap();
    let r = field.reference(123);
    assert_eq!(r.reuse(&field, 123).unwrap(), r.j_ref);
    for x in 0..field.conv.len() {
        assert!(rel_err(r.reuse(&field, x).unwrap(), field.intensity_at_index(x)) < 1e-12);
    }
    let other = ConvolutionField::from_grid(&spec, vec![0.0; spec.grid * spec.grid], 0.3, 10).unwrap();
    assert!(r.reuse(&other, 5).is_err());
    let flat = other.reference(0);
    for x in 0..other.conv.len() {
        assert!((flat.reuse(&other, x).unwrap() - spec.mass).abs() < 1e-12);
    }
}

#[test]
fn flat_score_steps_like_the_forward_process() {
    let spec = TorusJumpSpec::default();
    let flat = |_t: f64, _y: Point| 0.0;
    let field = ConvolutionField::build(&spec, &flat, 1.0).unwrap();
    let kappa = 0.05;
    let n = 100_000;
    let mut rng = seeded(48);
    let mut stats = JumpStepStats::default();
    for _ in 0..n {
        backward_jump_step(&spec, &flat, &field, [0.3, 0.3], 1.0, kappa, &mut rng, &mut stats).unwrap();
    }
    let lam = kappa * spec.mass;
    let mean = stats.jumps as f64 / n as f64;
    assert!((mean - lam).abs() <= 3.0 * (lam / n as f64).sqrt(), "{mean} vs {lam}");
    let acc = stats.jumps as f64 / stats.proposals as f64;
    let p = 1.0 / SUP_SAFETY;
    assert!((acc - p).abs() <= 3.0 * (p * (1.0 - p) / stats.proposals as f64).sqrt(), "acceptance {acc}");
}

fn one_mode(_t: f64, y: Point) -> f64 {
    1.5 * (2.0 * PI * (y[0] - 0.5)).cos()
}

#[test]
fn accepted_jumps_follow_the_tilted_kernel() {
    let spec = TorusJumpSpec::default();
    let field = ConvolutionField::build(&spec, &one_mode, 1.0).unwrap();
    let y = [0.2, 0.3];
    let j = field.intensity(y, one_mode(1.0, y));
    let kappa = 1.0 / j;
    let bins = 16;
    let mut counts = vec![0.0; bins];
    let mut rng = seeded(49);
    let mut stats = JumpStepStats::default();
    let mut singles = 0.0;
    while stats.proposals < 100_000 {
        let before = stats.jumps;
        let out = backward_jump_step(&spec, &one_mode, &field, y, 1.0, kappa, &mut rng, &mut stats).unwrap();
        if stats.jumps - before == 1 {
            counts[((out[0] * bins as f64) as usize).min(bins - 1)] += 1.0;
            singles += 1.0;
        }
    }
    // marginal in the first coordinate of ŝ(y, y') λ(y' - y)
    let sub = 64;
    let mut w = vec![0.0; bins];
    for (b, wb) in w.iter_mut().enumerate() {
        for k in 0..sub {
            let u = (b * sub + k) as f64 / (bins * sub) as f64 + 0.5 / (bins * sub) as f64;
            *wb += (one_mode(1.0, [u, 0.0]) - one_mode(1.0, y)).exp() * wrapped(spec.sigma, u - y[0]);
        }
    }
    let total: f64 = w.iter().sum();
    for b in 0..bins {
        let p = w[b] / total;
        let sd = (singles * p * (1.0 - p)).sqrt();
        assert!((counts[b] - singles * p).abs() <= 3.0 * sd, "bin {b}: {} vs {}", counts[b], singles * p);
    }
}

#[test]
fn no_jump_probability_has_slope_minus_intensity() {
    let spec = TorusJumpSpec::default();
    let field = ConvolutionField::build(&spec, &one_mode, 1.0).unwrap();
    let y = [0.7, 0.1];
    let j = field.intensity(y, one_mode(1.0, y));
    let n = 200_000;
    let mut rng = seeded(50);
    let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for kappa in [1e-2, 5e-3, 2.5e-3] {
        let mut moved = 0.0;
        for _ in 0..n {
            let mut st = JumpStepStats::default();
            backward_jump_step(&spec, &one_mode, &field, y, 1.0, kappa, &mut rng, &mut st).unwrap();
            if st.jumps > 0 {
                moved += 1.0;
            }
        }
        let p = moved / n as f64;
        let (v, se) = (p / kappa, (p * (1.0 - p) / n as f64).sqrt() / kappa);
        let wt = 1.0 / (se * se);
        sw += wt;
        swx += wt * kappa;
        swxx += wt * kappa * kappa;
        swy += wt * v;
        swxy += wt * kappa * v;
    }
    // weighted least squares of P(jump)/κ = J + b κ
    let det = sw * swxx - swx * swx;
    let intercept = (swxx * swy - swx * swxy) / det;
    let se = (swxx / det).sqrt();
    assert!((intercept - j).abs() <= 3.0 * se, "intercept {intercept} ± {se} vs J = {j}");
}

#[test]
fn true_potential_sampler_approaches_moons() {
    let spec = TorusJumpSpec::default();
    let horizon = 4.0;
    let target = TargetSpec::Moons;
    let mut rng = seeded(51);
    let to_points = |v: Vec<Vec<f64>>| -> Vec<Point> { v.into_iter().map(|p| [p[0], p[1]]).collect() };
    let data = to_points(target.sample(100_000, &mut rng).unwrap().into_continuous().unwrap());
    let reference = to_points(target.sample(200_000, &mut rng).unwrap().into_continuous().unwrap());
    let grid = TimeGrid::new(horizon, 200).unwrap();
    let times: Vec<f64> = (0..grid.steps).map(|l| horizon - grid.time(l)).collect();
    let pot = GridPotential::true_potential(&spec, &data, &times).unwrap();
    let engine = JumpEngine::new(spec, data, horizon, 4, 8).unwrap();
    let q0 = |r: &mut dyn RngCore| -> dmm::Result<Point> { Ok([r.random(), r.random()]) };
    let out = infer(&grid, &engine, &pot, &q0, 2048, &mut seeded(52)).unwrap();
    let tvs: Vec<f64> = (0..=4)
        .map(|k| {
            let l = out.nearest(k as f64 * horizon / 4.0);
            histogram_tv(&out.states[l], &reference, 32, 0.0, 1.0).unwrap()
        })
        .collect();
    for w in tvs.windows(2) {
        assert!(w[1] <= w[0] + 0.02, "TV along the run {tvs:?}");
    }
    assert!(tvs[4] < tvs[0] - 0.3, "TV along the run {tvs:?}");
}

proptest! {
    #[test]
    fn inner_integrand_is_bounded_by_its_infimum(a in 1e-6..1e3f64, b in 0.0..1e3f64) {
        let lower = if b > 0.0 { b - b * b.ln() } else { 0.0 };
        prop_assert!(a - b * a.ln() >= lower - 1e-9 * (1.0 + lower.abs()));
    }

    #[test]
    fn potential_scores_are_cocycles(x in prop::array::uniform2(0.0..1.0f64), y in prop::array::uniform2(0.0..1.0f64), z in prop::array::uniform2(0.0..1.0f64)) {
        use dmm::jump::JumpPotential;
        let p = |t: f64, q: Point| one_mode(t, q) + 0.3 * (2.0 * PI * q[1]).sin();
        prop_assert_eq!(p.score(0.5, x, x), 1.0);
        let lhs = p.score(0.5, x, y) * p.score(0.5, y, z);
        prop_assert!(rel_err(lhs, p.score(0.5, x, z)) < 1e-12);
    }
}

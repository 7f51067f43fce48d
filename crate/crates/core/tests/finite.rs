#![allow(clippy::needless_range_loop)]

mod common;

use common::{expm_apply, max_abs_diff, random_prob, random_rm};
use dmm::finite::{
    build_masked_rate, build_uniform_rate, discrete_sm_loss, discrete_sm_loss_exact, discrete_sm_term_grad,
    discretized_path_kl_extrapolated, evolve_density, exact_path_kl, exact_path_kl_marginal, gillespie_sample,
    masked_conditional, mc_path_kl, tv_distance, uniform_conditional, ChainKind, ConditionalLawDiscrete,
    DiscreteConditional, DiscreteSpace, McEstimate,
};
use dmm::generator::{ConstantRate, DensityVector, FixedScore, RateFamily, RateMatrix, ScoreTable};
use dmm::rng::seeded;
use dmm::time::TimeDistribution;
use rand::Rng;

#[test]
fn uniform_conditional_matches_matrix_exponential() {
    let space = DiscreteSpace::new(1, 3, false).unwrap();
    let rm = build_uniform_rate(&space).unwrap().0;
    for t in [0.7, 1.0] {
        for x0 in 0..3 {
            let mut delta = vec![0.0; 3];
            delta[x0] = 1.0;
            let oracle = expm_apply(&rm, t, &delta);
            for xt in 0..3 {
                let p = uniform_conditional(&space, &[x0], &[xt], t).unwrap();
                assert!((p - oracle[xt]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn uniform_conditional_matches_expm_in_two_dimensions() {
    let space = DiscreteSpace::new(2, 3, false).unwrap();
    let rm = build_uniform_rate(&space).unwrap().0;
    let x0 = space.encode(&[2, 1]);
    let oracle = expm_apply(&rm, 0.4, &DensityVector::point_mass(9, x0).values);
    for xt in 0..9 {
        let p = uniform_conditional(&space, &space.decode(x0), &space.decode(xt), 0.4).unwrap();
        assert!((p - oracle[xt]).abs() < 1e-9);
    }
}

#[test]
fn masked_coordinate_probability() {
    let space = DiscreteSpace::new(2, 2, true).unwrap();
    let x0 = [1, 2];
    let masked: f64 = [0, 2].iter().map(|&b| masked_conditional(&space, &x0, &[0, b], 0.3).unwrap()).sum();
    assert!((masked - (1.0 - (-0.3f64).exp())).abs() < 1e-12);
    assert!((masked - 0.259).abs() < 5e-4);
    let rm = build_masked_rate(&space).unwrap().0;
    let oracle = expm_apply(&rm, 0.3, &DensityVector::point_mass(9, space.encode(&x0)).values);
    for xt in 0..9 {
        let p = masked_conditional(&space, &x0, &space.decode(xt), 0.3).unwrap();
        assert!((p - oracle[xt]).abs() < 1e-9);
    }
}

#[test]
fn evolve_matches_matrix_exponential() {
    let mut rng = seeded(11);
    for n in [2, 3, 5, 8] {
        let rm = random_rm(n, &mut rng);
        let p0 = random_prob(n, &mut rng);
        for t in [0.1, 1.3, 4.0] {
            let p = evolve_density(&ConstantRate(rm.clone()), &DensityVector::new(p0.clone(), 0.0).unwrap(), t).unwrap();
            assert!(max_abs_diff(&p.values, &expm_apply(&rm, t, &p0)) < 1e-8);
        }
    }
}

#[test]
fn uniform_chain_contracts_towards_uniform() {
    let mut rng = seeded(12);
    let space = DiscreteSpace::new(2, 3, false).unwrap();
    let fam = build_uniform_rate(&space).unwrap();
    let u = vec![1.0 / 9.0; 9];
    for _ in 0..10 {
        let p0 = DensityVector::new(random_prob(9, &mut rng), 0.0).unwrap();
        let tv0 = tv_distance(&p0.values, &u).unwrap();
        for t in [0.25, 0.5, 1.0, 2.0] {
            let tv = tv_distance(&evolve_density(&fam, &p0, t).unwrap().values, &u).unwrap();
            assert!(tv <= (-t).exp() * tv0 + 1e-12, "t = {t}: {tv} > e^-t {tv0}");
        }
    }
}

#[test]
fn first_jump_time_is_exponential() {
    let rm = RateMatrix::from_intensity(2, |y, x| if (y, x) == (1, 0) { 1.0 } else { 0.0 }).unwrap();
    let fam = ConstantRate(rm);
    let mut rng = seeded(13);
    let n = 100_000;
    let mut total = 0.0;
    for _ in 0..n {
        let path = gillespie_sample(&fam, 0, 60.0, &mut rng).unwrap();
        total += if path.jumps() > 0 { path.points[1].0 } else { 60.0 };
    }
    let mean = total / n as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean first jump {mean}");
}

#[test]
fn gillespie_marginal_matches_conditional() {
    let space = DiscreteSpace::new(1, 3, false).unwrap();
    let fam = build_uniform_rate(&space).unwrap();
    let mut rng = seeded(14);
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[gillespie_sample(&fam, 0, 1.0, &mut rng).unwrap().terminal()] += 1;
    }
    for (x, &c) in counts.iter().enumerate() {
        let p = uniform_conditional(&space, &[0], &[x], 1.0).unwrap();
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sd, "state {x}: {c} vs {}", n as f64 * p);
    }
}

/// One active edge `0 → 1` at rate `a`; the estimate inflates the backward
/// ratio on that edge by `e`, so the integrand is `(e - 2) a p_t(0)`.
#[test]
fn path_kl_two_state_closed_form() {
    let a = 0.8;
    let horizon = 1.5;
    let rm = RateMatrix::from_intensity(2, |y, x| if (y, x) == (1, 0) { a } else { 0.0 }).unwrap();
    let fam = ConstantRate(rm);
    let p0 = DensityVector::new(vec![0.7, 0.3], 0.0).unwrap();
    let marginal = |t: f64| {
        let q = 0.7 * (-a * t).exp();
        [q, 1.0 - q]
    };
    let s_true = move |t: f64| ScoreTable::from_density(&marginal(t)).unwrap();
    let s_hat = move |t: f64| {
        let p = marginal(t);
        ScoreTable::new(2, vec![1.0, p[1] / p[0], std::f64::consts::E * p[0] / p[1], 1.0]).unwrap()
    };
    let kl = exact_path_kl(&fam, &s_true, &s_hat, &p0, horizon).unwrap();
    let closed = (std::f64::consts::E - 2.0) * 0.7 * (1.0 - (-a * horizon).exp());
    assert!((kl - closed).abs() < 1e-10 * closed, "{kl} vs {closed}");
}

fn three_state() -> (ConstantRate, DensityVector, ScoreTable) {
    let rm = RateMatrix::from_intensity(3, |y, x| [[0.0, 0.5, 1.2], [0.9, 0.0, 0.3], [0.6, 1.4, 0.0]][y][x]).unwrap();
    let p0 = DensityVector::new(vec![0.5, 0.2, 0.3], 0.0).unwrap();
    let sh = ScoreTable::new(3, vec![1.0, 1.7, 0.6, 0.8, 1.0, 2.2, 1.3, 0.4, 1.0]).unwrap();
    (ConstantRate(rm), p0, sh)
}

#[test]
fn path_kl_monte_carlo_agrees_with_quadrature() {
    let (fam, p0, sh) = three_state();
    let horizon = 1.0;
    let rm = fam.0.clone();
    let s_true = move |t: f64| ScoreTable::from_density(&expm_apply(&rm, t, &[0.5, 0.2, 0.3])).unwrap();
    let s_hat = FixedScore(sh);
    let exact = exact_path_kl(&fam, &s_true, &s_hat, &p0, horizon).unwrap();
    let mc = mc_path_kl(&fam, &s_true, &s_hat, &p0, horizon, 100_000, &mut seeded(15)).unwrap();
    assert!((mc.mean - exact).abs() <= 3.0 * mc.std_err, "{} ± {} vs {exact}", mc.mean, mc.std_err);
}

#[test]
fn path_kl_matches_discretized_path_measures() {
    let (fam, p0, sh) = three_state();
    let horizon = 1.0;
    let rm = fam.0.clone();
    let s_true = move |t: f64| ScoreTable::from_density(&expm_apply(&rm, t, &[0.5, 0.2, 0.3])).unwrap();
    let s_hat = FixedScore(sh);
    let exact = exact_path_kl(&fam, &s_true, &s_hat, &p0, horizon).unwrap();
    let disc = discretized_path_kl_extrapolated(&fam, &s_true, &s_hat, &p0, horizon, 2000).unwrap();
    assert!((disc - exact).abs() < 1e-4, "{disc} vs {exact}");
}

/// Exact enumeration over `(x0, x_t)`: the loss gradient in a tabular score
/// row vanishes at `E[p(y|x0) / p(x_t|x0) | x_t] = p_t(y) / p_t(x_t)`.
#[test]
fn loss_gradient_vanishes_at_conditional_expectation() {
    let space = DiscreteSpace::new(1, 3, false).unwrap();
    let cond = ConditionalLawDiscrete::new(space, ChainKind::Uniform).unwrap();
    let rm = build_uniform_rate(&space).unwrap().0;
    let data = [0usize, 1, 1, 2, 2, 2];
    for t in [0.1, 0.5, 1.5] {
        let mut pt = [0.0; 3];
        for &x0 in &data {
            for (y, v) in cond.distribution(x0, t).unwrap().iter().enumerate() {
                pt[y] += v / data.len() as f64;
            }
        }
        for xt in 0..3 {
            let row: Vec<f64> = (0..3).map(|y| pt[y] / pt[xt]).collect();
            let mut grad = [0.0; 3];
            for &x0 in &data {
                let c = cond.distribution(x0, t).unwrap();
                let g = discrete_sm_term_grad(&rm, &c, xt, &row);
                for y in 0..3 {
                    grad[y] += c[xt] * g[y] / data.len() as f64;
                }
            }
            assert!(grad.iter().all(|g| g.abs() < 1e-12), "t = {t}, x_t = {xt}: {grad:?}");
        }
    }
}

#[test]
fn loss_estimator_is_unbiased() {
    let space = DiscreteSpace::new(1, 3, false).unwrap();
    let cond = ConditionalLawDiscrete::new(space, ChainKind::Uniform).unwrap();
    let fam = build_uniform_rate(&space).unwrap();
    let score = FixedScore(ScoreTable::new(3, vec![1.0, 0.5, 2.0, 1.5, 1.0, 0.7, 0.9, 3.0, 1.0]).unwrap());
    let data = [0usize, 1, 1, 2];
    let psi = TimeDistribution::Uniform { lo: 0.05, hi: 1.0 };
    let exact = discrete_sm_loss_exact(&score, &cond, &data, &fam, &psi, 16).unwrap();
    let mut rng = seeded(16);
    let batches: Vec<f64> =
        (0..10_000).map(|_| discrete_sm_loss(&score, &cond, &data, &fam, &psi, 16, &mut rng).unwrap()).collect();
    let est = McEstimate::from_samples(&batches);
    assert!((est.mean - exact).abs() <= 3.0 * est.std_err, "{} ± {} vs {exact}", est.mean, est.std_err);
}

/// Grid search over a time-constant two-parameter score: the score-matching
/// objective and the path KL pick the same cell.
#[test]
fn score_matching_and_path_kl_share_a_minimizer() {
    let space = DiscreteSpace::new(1, 2, false).unwrap();
    let cond = ConditionalLawDiscrete::new(space, ChainKind::Uniform).unwrap();
    let fam = build_uniform_rate(&space).unwrap();
    let data = [0usize, 0, 0, 1];
    let p0 = DensityVector::new(vec![0.75, 0.25], 0.0).unwrap();
    let horizon = 1.0;
    let psi = TimeDistribution::Uniform { lo: 1e-3, hi: horizon };
    let grid: Vec<f64> = (0..31).map(|k| (-1.5 + 0.1 * k as f64).exp()).collect();
    let table = |a: f64, b: f64| FixedScore(ScoreTable::new(2, vec![1.0, a, b, 1.0]).unwrap());
    let (mut best_sm, mut best_kl) = ((f64::INFINITY, 0, 0), (f64::INFINITY, 0, 0));
    for (i, &a) in grid.iter().enumerate() {
        for (j, &b) in grid.iter().enumerate() {
            let s = table(a, b);
            let sm = discrete_sm_loss_exact(&s, &cond, &data, &fam, &psi, 8).unwrap();
            let kl = exact_path_kl_marginal(&fam, &s, &p0, horizon).unwrap();
            if sm < best_sm.0 {
                best_sm = (sm, i, j);
            }
            if kl < best_kl.0 {
                best_kl = (kl, i, j);
            }
        }
    }
    assert!(best_sm.1.abs_diff(best_kl.1) <= 1 && best_sm.2.abs_diff(best_kl.2) <= 1, "{best_sm:?} vs {best_kl:?}");
    assert!(fam.size() == 2);
}

#[test]
fn random_chains_keep_rates_valid_under_reversal() {
    let mut rng = seeded(17);
    for _ in 0..20 {
        let n = rng.random_range(3..=5);
        let rm = random_rm(n, &mut rng);
        let p = random_prob(n, &mut rng);
        let back = rm.backward(&ScoreTable::from_density(&p).unwrap()).unwrap();
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    assert!((back.intensity(y, x) * p[x] - rm.intensity(x, y) * p[y]).abs() < 1e-12);
                }
            }
        }
    }
}

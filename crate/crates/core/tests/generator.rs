mod common;

use common::{expm_apply, max_abs_diff, random_prob, random_rm};
use dmm::finite::{evolve_density, BackwardFamily};
use dmm::generator::{bregman, ConstantRate, DensityVector, RateMatrix, ScoreTable};
use dmm::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn generator_matches_double_loop() {
    let mut rng = seeded(1);
    for _ in 0..20 {
        let rm = random_rm(4, &mut rng);
        let f: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lf = rm.apply_generator(&f).unwrap();
        for x in 0..4 {
            let mut acc = 0.0;
            for y in 0..4 {
                if y != x {
                    acc += (f[y] - f[x]) * rm.intensity(y, x);
                }
            }
            assert!((lf[x] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn carre_du_champ_forms_agree() {
    let mut rng = seeded(2);
    for _ in 0..20 {
        let rm = random_rm(4, &mut rng);
        let f: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = rm.carre_du_champ(&f, &g).unwrap();
        let b = rm.carre_du_champ_three_term(&f, &g).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }
}

/// `p(x) L̄f(x) = L*(pf)(x) - f(x) L*p(x)` with the adjoint coded here.
#[test]
fn time_reversal_identity_on_small_chains() {
    let mut rng = seeded(3);
    for _ in 0..50 {
        let n = rng.random_range(2..=5);
        let rm = random_rm(n, &mut rng);
        let p = random_prob(n, &mut rng);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let adj = |g: &[f64], x: usize| -> f64 {
            (0..n).filter(|&y| y != x).map(|y| g[y] * rm.intensity(x, y) - g[x] * rm.intensity(y, x)).sum()
        };
        let back = rm.backward(&ScoreTable::from_density(&p).unwrap()).unwrap();
        let lbar = back.apply_generator(&f).unwrap();
        let pf: Vec<f64> = p.iter().zip(&f).map(|(a, b)| a * b).collect();
        for x in 0..n {
            let rhs = adj(&pf, x) - f[x] * adj(&p, x);
            assert!((p[x] * lbar[x] - rhs).abs() < 1e-10);
        }
    }
}

#[test]
fn backward_chain_reproduces_reversed_marginals() {
    let rm = RateMatrix::from_intensity(3, |y, x| [[0.0, 0.7, 0.2], [1.1, 0.0, 0.9], [0.4, 1.5, 0.0]][y][x]).unwrap();
    let p0 = [0.6, 0.3, 0.1];
    let horizon = 0.5;
    let fam = ConstantRate(rm.clone());
    let score = |t: f64| ScoreTable::from_density(&expm_apply(&rm, t, &p0)).unwrap();
    let back = BackwardFamily { forward: &fam, score: &score, horizon };
    let q0 = DensityVector::new(expm_apply(&rm, horizon, &p0), 0.0).unwrap();
    for k in 1..=5 {
        let tau = k as f64 * horizon / 5.0;
        let q = evolve_density(&back, &q0, tau).unwrap();
        let p = expm_apply(&rm, horizon - tau, &p0);
        assert!(max_abs_diff(&q.values, &p) < 1e-6, "tau = {tau}");
    }
}

/// The change-of-measure integrand rewritten through `η = φ / p` and the forward generator.
#[test]
fn eta_form_matches_bregman_form() {
    let mut rng = seeded(4);
    for _ in 0..20 {
        let rm = random_rm(4, &mut rng);
        let p = random_prob(4, &mut rng);
        let phi: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..3.0)).collect();
        let eta: Vec<f64> = phi.iter().zip(&p).map(|(a, b)| a / b).collect();
        let mut derived = 0.0;
        for x in 0..4 {
            let mut v = 0.0;
            for y in (0..4).filter(|&y| y != x) {
                let lam = rm.intensity(y, x);
                v += eta[x] * lam * (1.0 / eta[y] - 1.0 / eta[x]) + lam * (eta[y].ln() - eta[x].ln());
            }
            derived += p[x] * v;
        }
        let s = ScoreTable::from_density(&p).unwrap();
        let sh = ScoreTable::from_potential(&phi).unwrap();
        let bregman_form: f64 = (0..4).map(|x| p[x] * rm.kl_path_integrand(&s, &sh, x).unwrap()).sum();
        let lib_eta: f64 = rm.kl_integrand_eta_form(&eta).unwrap().iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((derived - bregman_form).abs() < 1e-10);
        assert!((lib_eta - bregman_form).abs() < 1e-10);
    }
}

fn rate_and_score(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(0.0..3.0f64, n * n),
        prop::collection::vec(0.05..20.0f64, n * n),
        prop::collection::vec(0.05..20.0f64, n * n),
    )
}

proptest! {
    #[test]
    fn backward_output_is_a_rate_matrix((lam, s, _) in rate_and_score(4)) {
        let rm = RateMatrix::from_intensity(4, |y, x| lam[y * 4 + x]).unwrap();
        let back = rm.backward(&ScoreTable::new(4, s).unwrap()).unwrap();
        prop_assert!(back.validate().is_ok());
    }

    #[test]
    fn path_integrand_is_nonnegative((lam, s, sh) in rate_and_score(4), x in 0usize..4) {
        let rm = RateMatrix::from_intensity(4, |y, x| lam[y * 4 + x]).unwrap();
        let v = rm.kl_path_integrand(&ScoreTable::new(4, s).unwrap(), &ScoreTable::new(4, sh).unwrap(), x).unwrap();
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn bregman_is_nonnegative(r in 1e-6..1e6f64) {
        prop_assert!(bregman(r) >= 0.0);
    }
}

//! Oracles shared by the integration tests. Nothing here calls the library's
//! own integrators.
#![allow(dead_code)]

use dmm::generator::RateMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dense generator matrix `Λ` with `Λ[(y, x)]` the rate `x → y`.
pub fn dense(rm: &RateMatrix) -> DMatrix<f64> {
    let n = rm.size();
    DMatrix::from_fn(n, n, |y, x| rm.rate(y, x))
}

/// `exp(tΛ) p0` by Padé scaling and squaring.
pub fn expm_apply(rm: &RateMatrix, t: f64, p0: &[f64]) -> Vec<f64> {
    let m = (dense(rm) * t).exp();
    (m * DVector::from_column_slice(p0)).iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Random strictly positive probability vector.
pub fn random_prob(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Random rate matrix with off-diagonal intensities in `[0.1, 2)`.
pub fn random_rm(n: usize, rng: &mut impl Rng) -> RateMatrix {
    RateMatrix::from_intensity(n, |_, _| rng.random_range(0.1..2.0)).unwrap()
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `erfc` with relative error below 1.2e-7 (Numerical Recipes `erfcc`).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Upper `1 - alpha` quantile of `χ²_k` by the Wilson–Hilferty approximation,
/// `z` the matching standard normal quantile.
pub fn chi2_quantile(k: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + z * a.sqrt()).powi(3)
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

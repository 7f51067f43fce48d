//! Exact generator algebra on finite state spaces.
//!
//! # Convention
//!
//! Rate matrices act on **columns**: the density vector evolves as
//! `dp/dt = Λ p`, so `Λ(y, x)` is the rate of jumping *from* `x` *to* `y` and
//! every column sums to zero. The off-diagonal intensity is
//! `λ(y, x) = Λ(y, x)` for `y != x` and `λ(x, x) = 0`.
//!
//! With this convention
//!
//! * the generator is `L f(x) = Σ_y (f(y) - f(x)) λ(y, x)` (i.e. `Λᵀ f`),
//! * its adjoint is `L* g(x) = Σ_y (g(y) λ(x, y) - g(x) λ(y, x))` (i.e. `Λ g`),
//! * the time reversal has off-diagonal rates `Λ̄(y, x) = s(x, y) Λ(x, y)`
//!   with `s(x, y) = p(y) / p(x)`.
//!
//! Edges with `λ = 0` contribute nothing to any sum, whatever the score says
//! there.

use crate::error::{check_len, Error, Result};

const RATE_TOL: f64 = 1e-9;

/// Column-action CTMC rate matrix, stored row-major as `rates[y * n + x] = Λ(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    n: usize,
    rates: Vec<f64>,
}

impl RateMatrix {
    /// Wraps a full matrix and checks both rate-matrix invariants.
    pub fn new(n: usize, rates: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidRate("empty state space".into()));
        }
        check_len(n * n, rates.len())?;
        let rm = Self { n, rates };
        rm.validate()?;
        Ok(rm)
    }

    /// Builds a rate matrix from an off-diagonal intensity `λ(y, x)`; the
    /// diagonal is rebuilt so that columns sum to zero.
    pub fn from_intensity(n: usize, mut intensity: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidRate("empty state space".into()));
        }
        let mut rates = vec![0.0; n * n];
        for x in 0..n {
            let mut out = 0.0;
            for y in 0..n {
                if y == x {
                    continue;
                }
                let r = intensity(y, x);
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(Error::InvalidRate(format!("intensity λ({y},{x}) = {r}")));
                }
                rates[y * n + x] = r;
                out += r;
            }
            rates[x * n + x] = -out;
        }
        Ok(Self { n, rates })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, rates: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `Λ(y, x)`, diagonal included.
    #[inline]
    pub fn rate(&self, y: usize, x: usize) -> f64 {
        self.rates[y * self.n + x]
    }

    /// Off-diagonal intensity `λ(y, x)`; zero on the diagonal.
    #[inline]
    pub fn intensity(&self, y: usize, x: usize) -> f64 {
        if y == x {
            0.0
        } else {
            self.rates[y * self.n + x]
        }
    }

    /// Total rate of leaving `x`.
    #[inline]
    pub fn exit_rate(&self, x: usize) -> f64 {
        -self.rates[x * self.n + x]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n).map(|x| self.exit_rate(x)).fold(0.0, f64::max)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, rates: self.rates.iter().map(|r| r * c).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        for x in 0..n {
            let mut col = 0.0;
            let mut scale: f64 = 0.0;
            for y in 0..n {
                let r = self.rates[y * n + x];
                if !r.is_finite() {
                    return Err(Error::InvalidRate(format!("non-finite Λ({y},{x})")));
                }
                if y != x && r < 0.0 {
                    return Err(Error::InvalidRate(format!("negative off-diagonal Λ({y},{x}) = {r}")));
                }
                col += r;
                scale = scale.max(r.abs());
            }
            if col.abs() > RATE_TOL * scale.max(1.0) {
                return Err(Error::InvalidRate(format!("column {x} sums to {col:e}")));
            }
        }
        Ok(())
    }

    /// `(L f)(x) = Σ_y (f(y) - f(x)) λ(y, x)`.
    pub fn apply_generator(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, f.len())?;
        let n = self.n;
        Ok((0..n)
            .map(|x| {
                let fx = f[x];
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| {
                        let r = self.rates[y * n + x];
                        if r == 0.0 {
                            0.0
                        } else {
                            (f[y] - fx) * r
                        }
                    })
                    .sum()
            })
            .collect())
    }

    /// `(L* g)(x) = Σ_y (g(y) λ(x, y) - g(x) λ(y, x))`, which is `Λ g`.
    pub fn apply_adjoint(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, g.len())?;
        let n = self.n;
        Ok((0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| g[y] * self.rates[x * n + y] - g[x] * self.rates[y * n + x])
                    .sum()
            })
            .collect())
    }

    /// `Λ p`, used by the Kolmogorov forward integrator.
    pub(crate) fn mul_vec_into(&self, p: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (y, o) in out.iter_mut().enumerate() {
            let row = &self.rates[y * n..(y + 1) * n];
            *o = row.iter().zip(p).map(|(a, b)| a * b).sum();
        }
    }

    /// `Γ(f, g)(x) = Σ_y (f(y) - f(x)) (g(y) - g(x)) λ(y, x)`.
    pub fn carre_du_champ(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, f.len())?;
        check_len(self.n, g.len())?;
        let n = self.n;
        Ok((0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| {
                        let r = self.rates[y * n + x];
                        if r == 0.0 {
                            0.0
                        } else {
                            (f[y] - f[x]) * (g[y] - g[x]) * r
                        }
                    })
                    .sum()
            })
            .collect())
    }

    /// `Γ(f, g) = L(fg) - f Lg - g Lf`, the defining three-term form.
    pub fn carre_du_champ_three_term(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, f.len())?;
        let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
        let lfg = self.apply_generator(&fg)?;
        let lf = self.apply_generator(f)?;
        let lg = self.apply_generator(g)?;
        Ok((0..self.n).map(|x| lfg[x] - f[x] * lg[x] - g[x] * lf[x]).collect())
    }

    /// Backward rate matrix `Λ̄(y, x) = s(x, y) Λ(x, y)` for `y != x`.
    ///
    /// The caller is responsible for the time flip: to get the reversal at
    /// backward time `t`, pass the forward rates and score at `T - t`.
    pub fn backward(&self, score: &ScoreTable) -> Result<RateMatrix> {
        check_len(self.n, score.size())?;
        score.check_positive()?;
        RateMatrix::from_intensity(self.n, |y, x| {
            let r = self.intensity(x, y);
            if r == 0.0 {
                0.0
            } else {
                score.get(x, y) * r
            }
        })
    }

    /// Bregman-form path-KL integrand at state `x`:
    /// `Σ_y (r - 1 - ln r) s(x, y) λ(x, y)` with `r = ŝ(x, y) / s(x, y)`.
    pub fn kl_path_integrand(&self, s_true: &ScoreTable, s_hat: &ScoreTable, x: usize) -> Result<f64> {
        check_len(self.n, s_true.size())?;
        check_len(self.n, s_hat.size())?;
        if x >= self.n {
            return Err(Error::Domain(format!("state {x} out of range {}", self.n)));
        }
        let mut acc = 0.0;
        for y in 0..self.n {
            if y == x {
                continue;
            }
            let lam = self.intensity(x, y);
            if lam == 0.0 {
                continue;
            }
            let s = s_true.get(x, y);
            let sh = s_hat.get(x, y);
            if !(s > 0.0) {
                return Err(Error::NonPositiveScore { x, y, value: s });
            }
            if !(sh > 0.0) {
                return Err(Error::NonPositiveScore { x, y, value: sh });
            }
            acc += bregman(sh / s) * s * lam;
        }
        Ok(acc)
    }

    /// The change-of-measure integrand written in terms of the density ratio
    /// `η = φ / p`: `(η L η⁻¹ + L ln η)(x)` for every `x`.
    pub fn kl_integrand_eta_form(&self, eta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, eta.len())?;
        if let Some((i, &v)) = eta.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveScore { x: i, y: i, value: v });
        }
        let inv: Vec<f64> = eta.iter().map(|e| 1.0 / e).collect();
        let log: Vec<f64> = eta.iter().map(|e| e.ln()).collect();
        let l_inv = self.apply_generator(&inv)?;
        let l_log = self.apply_generator(&log)?;
        Ok((0..self.n).map(|x| eta[x] * l_inv[x] + l_log[x]).collect())
    }
}

/// `r - 1 - ln r`, nonnegative with its only zero at `r = 1`.
#[inline]
pub fn bregman(r: f64) -> f64 {
    r - 1.0 - r.ln()
}

/// Full table of score ratios `s(x, y)`, stored row-major by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    n: usize,
    ratios: Vec<f64>,
}

impl ScoreTable {
    /// Takes an arbitrary strictly positive table; the diagonal is forced to 1.
    /// Consistency `s(x,y) s(y,x) = 1` is not required.
    pub fn new(n: usize, mut ratios: Vec<f64>) -> Result<Self> {
        check_len(n * n, ratios.len())?;
        for x in 0..n {
            ratios[x * n + x] = 1.0;
        }
        let t = Self { n, ratios };
        t.check_positive()?;
        Ok(t)
    }

    pub fn ones(n: usize) -> Self {
        Self { n, ratios: vec![1.0; n * n] }
    }

    /// `s(x, y) = p(y) / p(x)` for a strictly positive density.
    pub fn from_density(p: &[f64]) -> Result<Self> {
        Self::from_potential(p)
    }

    /// `s(x, y) = φ(y) / φ(x)` for any strictly positive `φ`.
    pub fn from_potential(phi: &[f64]) -> Result<Self> {
        let n = phi.len();
        if let Some((i, &v)) = phi.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveScore { x: i, y: i, value: v });
        }
        let mut ratios = vec![1.0; n * n];
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    ratios[x * n + y] = phi[y] / phi[x];
                }
            }
        }
        Ok(Self { n, ratios })
    }

    /// `s(x, y) = exp(g(y) - g(x))` for a log-potential `g`.
    pub fn from_log_potential(g: &[f64]) -> Result<Self> {
        let n = g.len();
        let mut ratios = vec![1.0; n * n];
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    ratios[x * n + y] = (g[y] - g[x]).exp();
                }
            }
        }
        let t = Self { n, ratios };
        t.check_positive()?;
        Ok(t)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.ratios[x * self.n + y]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.ratios
    }

    pub fn check_positive(&self) -> Result<()> {
        for x in 0..self.n {
            for y in 0..self.n {
                let v = self.ratios[x * self.n + y];
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositiveScore { x, y, value: v });
                }
            }
        }
        Ok(())
    }

    /// Max over pairs of `|s(x,y) s(y,x) - 1|`.
    pub fn reciprocity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.n {
            for y in 0..self.n {
                worst = worst.max((self.get(x, y) * self.get(y, x) - 1.0).abs());
            }
        }
        worst
    }
}

/// Probability vector over a finite state space at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityVector {
    pub const SUM_TOL: f64 = 1e-9;

    pub fn new(values: Vec<f64>, time: f64) -> Result<Self> {
        let d = Self { values, time };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidDensity("empty".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity(format!("entry {v}")));
        }
        let s: f64 = self.values.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidDensity(format!("sums to {s}")));
        }
        Ok(())
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut values = vec![0.0; n];
        values[x] = 1.0;
        Self { values, time: 0.0 }
    }

    pub fn uniform(n: usize) -> Self {
        Self { values: vec![1.0 / n as f64; n], time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A time-indexed family of rate matrices `t ↦ Λ_t`.
pub trait RateFamily: Sync {
    fn size(&self) -> usize;

    fn at(&self, t: f64) -> RateMatrix;

    /// Upper bound on every exit rate over `[t0, t1]`, used for thinning.
    /// `None` means no bound is known.
    fn exit_rate_bound(&self, t0: f64, t1: f64) -> Option<f64>;

    /// True when `at` does not depend on `t`.
    fn is_time_homogeneous(&self) -> bool {
        false
    }
}

/// Time-homogeneous family.
#[derive(Debug, Clone)]
pub struct ConstantRate(pub RateMatrix);

impl RateFamily for ConstantRate {
    fn size(&self) -> usize {
        self.0.size()
    }

    fn at(&self, _t: f64) -> RateMatrix {
        self.0.clone()
    }

    fn exit_rate_bound(&self, _t0: f64, _t1: f64) -> Option<f64> {
        Some(self.0.max_exit_rate())
    }

    fn is_time_homogeneous(&self) -> bool {
        true
    }
}

/// `Λ_t = c(t) Λ` for a nonnegative scalar schedule with a known bound.
pub struct ScheduledRate<F> {
    pub base: RateMatrix,
    pub schedule: F,
    pub schedule_max: f64,
}

impl<F: Fn(f64) -> f64 + Sync> RateFamily for ScheduledRate<F> {
    fn size(&self) -> usize {
        self.base.size()
    }

    fn at(&self, t: f64) -> RateMatrix {
        self.base.scaled((self.schedule)(t))
    }

    fn exit_rate_bound(&self, _t0: f64, _t1: f64) -> Option<f64> {
        Some(self.base.max_exit_rate() * self.schedule_max)
    }
}

/// Provider of score tables over time (true or estimated).
pub trait ScoreProvider: Sync {
    fn score(&self, t: f64) -> ScoreTable;
}

impl<F: Fn(f64) -> ScoreTable + Sync> ScoreProvider for F {
    fn score(&self, t: f64) -> ScoreTable {
        self(t)
    }
}

/// A time-independent score table.
pub struct FixedScore(pub ScoreTable);

impl ScoreProvider for FixedScore {
    fn score(&self, _t: f64) -> ScoreTable {
        self.0.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rm(n: usize, rng: &mut impl Rng) -> RateMatrix {
        RateMatrix::from_intensity(n, |_, _| rng.random_range(0.0..2.0)).unwrap()
    }

    fn two_state_single_edge() -> RateMatrix {
        // λ(2,1) = 1 (from state 0 to state 1 in 0-based indexing), λ(1,2) = 0
        RateMatrix::from_intensity(2, |y, x| if y == 1 && x == 0 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn generator_kills_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rm = random_rm(5, &mut rng);
        let out = rm.apply_generator(&[1.0; 5]).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn generator_single_edge() {
        let rm = two_state_single_edge();
        assert_eq!(rm.apply_generator(&[0.0, 1.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn generator_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rm = random_rm(4, &mut rng);
        let f: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = rm.apply_generator(&f).unwrap();
        // Λᵀ f, written out as a plain double loop over the full matrix
        for x in 0..4 {
            let mut want = 0.0;
            for y in 0..4 {
                want += rm.rate(y, x) * f[y];
            }
            assert!((got[x] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let rm = RateMatrix::zeros(3);
        assert!(matches!(rm.apply_generator(&[0.0; 2]), Err(Error::DimensionMismatch { .. })));
        assert!(rm.carre_du_champ(&[0.0; 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(RateMatrix::new(2, vec![-1.0, -1.0, 1.0, 1.0]).is_err());
        assert!(RateMatrix::new(2, vec![-1.0, 0.5, 1.0, -0.5]).is_ok());
        assert!(RateMatrix::new(2, vec![-1.0, 0.0, 0.5, 0.0]).is_err());
    }

    #[test]
    fn carre_du_champ_cases() {
        let rm = two_state_single_edge();
        assert_eq!(rm.carre_du_champ(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(rm.carre_du_champ(&[0.3, 1.7], &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rm = random_rm(4, &mut rng);
        let f: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = rm.carre_du_champ(&f, &g).unwrap();
        let b = rm.carre_du_champ_three_term(&f, &g).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_with_unit_score_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rm = random_rm(4, &mut rng);
        let bw = rm.backward(&ScoreTable::ones(4)).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                if x != y {
                    assert_eq!(bw.rate(y, x), rm.rate(x, y));
                }
            }
        }
        bw.validate().unwrap();
    }

    #[test]
    fn backward_detailed_balance_two_state() {
        // stationary law of a two-state chain with a = λ(1,0), b = λ(0,1) is (b, a)/(a+b)
        let (a, b) = (0.7, 1.9);
        let rm = RateMatrix::from_intensity(2, |y, _| if y == 1 { a } else { b }).unwrap();
        let p = [b / (a + b), a / (a + b)];
        let bw = rm.backward(&ScoreTable::from_density(&p).unwrap()).unwrap();
        for (x, y) in [(0, 1), (1, 0)] {
            assert!((bw.rate(y, x) * p[x] - rm.rate(x, y) * p[y]).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_rejects_nonpositive_score() {
        let rm = RateMatrix::zeros(2);
        let bad = ScoreTable { n: 2, ratios: vec![1.0, 0.0, 1.0, 1.0] };
        assert!(matches!(rm.backward(&bad), Err(Error::NonPositiveScore { .. })));
    }

    #[test]
    fn kl_integrand_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rm = random_rm(4, &mut rng);
        let p: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.0)).collect();
        let s = ScoreTable::from_density(&p).unwrap();
        for x in 0..4 {
            assert_eq!(rm.kl_path_integrand(&s, &s, x).unwrap(), 0.0);
        }
        // single edge λ(x=0, y=1) = 1: rate from 1 into 0
        let rm = RateMatrix::from_intensity(2, |y, x| if y == 0 && x == 1 { 1.0 } else { 0.0 }).unwrap();
        let s = ScoreTable::ones(2);
        let sh = ScoreTable::new(2, vec![1.0, std::f64::consts::E, 1.0, 1.0]).unwrap();
        let v = rm.kl_path_integrand(&s, &sh, 0).unwrap();
        assert!((v - (std::f64::consts::E - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_edges_ignore_score() {
        let rm = RateMatrix::zeros(3);
        let s = ScoreTable::ones(3);
        let sh = ScoreTable::new(3, vec![5.0; 9]).unwrap();
        assert_eq!(rm.kl_path_integrand(&s, &sh, 1).unwrap(), 0.0);
    }

    #[test]
    fn score_table_from_density_is_reciprocal() {
        let s = ScoreTable::from_density(&[0.2, 0.3, 0.5]).unwrap();
        assert!(s.reciprocity_defect() < 1e-15);
        assert_eq!(s.get(1, 1), 1.0);
    }
}

use crate::error::{Error, Result};
use crate::generator::{DensityVector, RateFamily, ScoreProvider, ScoreTable};

/// Local error tolerance of the adaptive integrator (max-norm per step).
pub const EVOLVE_TOL: f64 = 1e-10;
/// Largest renormalization correction accepted before reporting failure.
pub const RENORM_TOL: f64 = 1e-8;
const MAX_STEPS: usize = 2_000_000;

fn rk4_step<F: RateFamily + ?Sized>(family: &F, t: f64, p: &[f64], h: f64, out: &mut [f64]) {
    let n = p.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let homogeneous = family.is_time_homogeneous();
    let rm0 = family.at(t);
    let rm_mid = if homogeneous { rm0.clone() } else { family.at(t + 0.5 * h) };
    let rm1 = if homogeneous { rm0.clone() } else { family.at(t + h) };
    rm0.mul_vec_into(p, &mut k1);
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * h * k1[i];
    }
    rm_mid.mul_vec_into(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * h * k2[i];
    }
    rm_mid.mul_vec_into(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = p[i] + h * k3[i];
    }
    rm1.mul_vec_into(&tmp, &mut k4);
    for i in 0..n {
        out[i] = p[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `dp/dt = Λ_t p` from `p0.time` to `t_end` with step-doubling
/// adaptive RK4.
pub fn evolve_density<F: RateFamily + ?Sized>(family: &F, p0: &DensityVector, t_end: f64) -> Result<DensityVector> {
    p0.validate()?;
    if p0.len() != family.size() {
        return Err(Error::DimensionMismatch { expected: family.size(), got: p0.len() });
    }
    if t_end < p0.time {
        return Err(Error::Domain(format!("cannot integrate backwards from {} to {t_end}", p0.time)));
    }
    let span = t_end - p0.time;
    let mut p = p0.values.clone();
    if span == 0.0 {
        return Ok(p0.clone());
    }
    let n = p.len();
    let scale = family.exit_rate_bound(p0.time, t_end).unwrap_or(1.0).max(1e-12);
    let mut t = p0.time;
    let mut h = (0.5 / scale).min(span);
    let mut full = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut two = vec![0.0; n];
    let mut steps = 0;
    while t < t_end {
        if steps >= MAX_STEPS {
            return Err(Error::Tolerance { what: format!("step budget exhausted at t = {t}"), tol: EVOLVE_TOL });
        }
        steps += 1;
        let h_try = h.min(t_end - t);
        rk4_step(family, t, &p, h_try, &mut full);
        rk4_step(family, t, &p, 0.5 * h_try, &mut half);
        rk4_step(family, t + 0.5 * h_try, &half, 0.5 * h_try, &mut two);
        let err = full.iter().zip(&two).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err <= EVOLVE_TOL || h_try < 1e-14 * span {
            // local extrapolation of the two half steps
            for i in 0..n {
                p[i] = two[i] + (two[i] - full[i]) / 15.0;
            }
            t = if t_end - t <= h_try { t_end } else { t + h_try };
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * (EVOLVE_TOL / err).powf(0.2)).clamp(0.1, 4.0) };
        h = h_try * factor;
    }
    let values = renormalize(p)?;
    Ok(DensityVector { values, time: t_end })
}

fn renormalize(mut p: Vec<f64>) -> Result<Vec<f64>> {
    for v in p.iter_mut() {
        if *v < 0.0 {
            if *v < -RENORM_TOL {
                return Err(Error::Tolerance { what: format!("negative mass {v:e}"), tol: RENORM_TOL });
            }
            *v = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > RENORM_TOL {
        return Err(Error::Tolerance { what: format!("renormalization drift {:e}", s - 1.0), tol: RENORM_TOL });
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

/// Forward marginals on `[0, T]` with cubic Hermite dense output between
/// uniformly spaced nodes. Derivatives at the nodes are exact (`Λ_t p_t`), so
/// the interpolant is fourth-order accurate and preserves total mass.
#[derive(Debug, Clone)]
pub struct DensityPath {
    horizon: f64,
    nodes: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl DensityPath {
    pub fn solve<F: RateFamily + ?Sized>(family: &F, p0: &DensityVector, horizon: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 || !(horizon > 0.0) {
            return Err(Error::Domain("density path needs a positive horizon and at least one interval".into()));
        }
        let h = horizon / intervals as f64;
        let mut nodes = Vec::with_capacity(intervals + 1);
        let mut slopes = Vec::with_capacity(intervals + 1);
        let mut cur = DensityVector { values: p0.values.clone(), time: 0.0 };
        for k in 0..=intervals {
            let t = k as f64 * h;
            if k > 0 {
                cur = evolve_density(family, &cur, t)?;
            }
            let mut d = vec![0.0; cur.len()];
            family.at(t).mul_vec_into(&cur.values, &mut d);
            nodes.push(cur.values.clone());
            slopes.push(d);
        }
        Ok(Self { horizon, nodes, slopes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn size(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let m = self.nodes.len() - 1;
        let h = self.horizon / m as f64;
        let tc = t.clamp(0.0, self.horizon);
        let k = ((tc / h).floor() as usize).min(m - 1);
        let s = (tc - k as f64 * h) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        let (da, db) = (&self.slopes[k], &self.slopes[k + 1]);
        (0..a.len())
            .map(|i| h00 * a[i] + h10 * h * da[i] + h01 * b[i] + h11 * h * db[i])
            .collect()
    }

    pub fn density(&self, t: f64) -> DensityVector {
        DensityVector { values: self.at(t), time: t }
    }
}

/// True score `s_t(x, y) = p_t(y) / p_t(x)` read off a [`DensityPath`].
pub struct MarginalScore<'a> {
    pub path: &'a DensityPath,
}

/// Floor applied to marginals before forming ratios.
pub const MARGINAL_FLOOR: f64 = 1e-300;

impl ScoreProvider for MarginalScore<'_> {
    fn score(&self, t: f64) -> ScoreTable {
        let p: Vec<f64> = self.path.at(t).into_iter().map(|v| v.max(MARGINAL_FLOOR)).collect();
        ScoreTable::from_density(&p).expect("floored marginals are positive")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{ConstantRate, RateMatrix};

    #[test]
    fn zero_rates_leave_density_unchanged() {
        let p0 = DensityVector::new(vec![0.2, 0.5, 0.3], 0.0).unwrap();
        let p = evolve_density(&ConstantRate(RateMatrix::zeros(3)), &p0, 2.0).unwrap();
        assert_eq!(p.values, p0.values);
        assert_eq!(p.time, 2.0);
    }

    #[test]
    fn two_state_closed_form() {
        // λ(1,0) = a, λ(0,1) = b: p_t(1) = a/(a+b) + (p0(1) - a/(a+b)) e^{-(a+b)t}
        let (a, b) = (0.8, 0.3);
        let rm = RateMatrix::from_intensity(2, |y, _| if y == 1 { a } else { b }).unwrap();
        let p0 = DensityVector::new(vec![1.0, 0.0], 0.0).unwrap();
        let t = 1.7;
        let p = evolve_density(&ConstantRate(rm), &p0, t).unwrap();
        let want = a / (a + b) * (1.0 - (-(a + b) * t).exp());
        assert!((p.values[1] - want).abs() < 1e-10);
    }

    #[test]
    fn rejects_backward_integration() {
        let p0 = DensityVector { values: vec![1.0], time: 1.0 };
        assert!(evolve_density(&ConstantRate(RateMatrix::zeros(1)), &p0, 0.5).is_err());
    }

    #[test]
    fn hermite_path_matches_direct_integration() {
        let rm = RateMatrix::from_intensity(3, |y, x| 0.3 + 0.4 * ((y + 2 * x) % 3) as f64).unwrap();
        let fam = ConstantRate(rm);
        let p0 = DensityVector::new(vec![0.7, 0.2, 0.1], 0.0).unwrap();
        let path = DensityPath::solve(&fam, &p0, 2.0, 400).unwrap();
        for &t in &[0.0, 0.3337, 1.0, 1.999] {
            let direct = evolve_density(&fam, &p0, t).unwrap();
            let interp = path.at(t);
            for (a, b) in direct.values.iter().zip(&interp) {
                assert!((a - b).abs() < 1e-11, "t = {t}: {a} vs {b}");
            }
        }
    }
}

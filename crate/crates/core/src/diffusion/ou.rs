use rand::RngCore;

use super::{normals, DiffusionFields, DiffusionProcess, DiffusionScore};
use crate::error::{check_len, Error, Result};

/// Ornstein–Uhlenbeck process `dx = -x/2 dt + dw` in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ou {
    pub dim: usize,
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// `∇ log p_{t|0}(x_t | x0) = -(x_t - x0 e^{-t/2}) / (1 - e^{-t})`.
pub fn ou_conditional_score(x0: &[f64], xt: &[f64], t: f64) -> Result<Vec<f64>> {
    check_t(t)?;
    check_len(x0.len(), xt.len())?;
    let m = (-0.5 * t).exp();
    let v = -(-t).exp_m1();
    Ok(x0.iter().zip(xt).map(|(a, b)| -(b - a * m) / v).collect())
}

/// Draws `x_t ~ N(x0 e^{-t/2}, (1 - e^{-t}) I)` and returns it with its conditional score.
pub fn ou_conditional(x0: &[f64], t: f64, rng: &mut dyn RngCore) -> Result<(Vec<f64>, Vec<f64>)> {
    check_t(t)?;
    let z = normals(x0.len(), rng);
    let xt = Ou { dim: x0.len() }.conditional_sample_from(x0, t, &z)?;
    let s = ou_conditional_score(x0, &xt, t)?;
    Ok((xt, s))
}

impl DiffusionProcess for Ou {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _t: f64, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| -0.5 * v).collect()
    }

    fn fields(&self, _t: f64, x: &[f64]) -> Result<DiffusionFields> {
        check_len(self.dim, x.len())?;
        let n = self.dim;
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        Ok(DiffusionFields { d: id.clone(), factor: id, div: vec![0.0; n] })
    }

    fn conditional_sample_from(&self, x0: &[f64], t: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_t(t)?;
        check_len(self.dim, x0.len())?;
        check_len(self.dim, z.len())?;
        let m = (-0.5 * t).exp();
        let sd = (-(-t).exp_m1()).sqrt();
        Ok(x0.iter().zip(z).map(|(a, b)| a * m + sd * b).collect())
    }

    fn conditional_score(&self, x0: &[f64], xt: &[f64], t: f64) -> Result<Vec<f64>> {
        ou_conditional_score(x0, xt, t)
    }
}

/// Exact marginal score of the 1-D OU process started from a Gaussian mixture
/// `Σ_k w_k N(m_k, v_k)`: at time `t` the marginal is the mixture with means
/// `m_k e^{-t/2}` and variances `v_k e^{-t} + 1 - e^{-t}`.
#[derive(Debug, Clone)]
pub struct OuMixtureScore {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

impl OuMixtureScore {
    fn components(&self, t: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let e = (-t).exp();
        let m = (-0.5 * t).exp();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.vars)
            .map(move |((w, mu), v)| (*w, mu * m, v * e + 1.0 - e))
    }

    pub fn density(&self, t: f64, x: f64) -> f64 {
        self.components(t)
            .map(|(w, m, v)| w * (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
            .sum()
    }

    pub fn score_at(&self, t: f64, x: f64) -> f64 {
        // log-sum-exp weighted average of component scores
        let logs: Vec<(f64, f64)> = self
            .components(t)
            .map(|(w, m, v)| (w.ln() - 0.5 * v.ln() - (x - m) * (x - m) / (2.0 * v), -(x - m) / v))
            .collect();
        let mx = logs.iter().fold(f64::NEG_INFINITY, |a, (l, _)| a.max(*l));
        let (num, den) = logs.iter().fold((0.0, 0.0), |(n, d), (l, s)| {
            let w = (l - mx).exp();
            (n + w * s, d + w)
        });
        num / den
    }
}

impl DiffusionScore for OuMixtureScore {
    fn score(&self, t: f64, x: &[f64]) -> Vec<f64> {
        vec![self.score_at(t, x[0])]
    }
}

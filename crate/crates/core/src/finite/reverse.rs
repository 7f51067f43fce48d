use crate::error::{check_len, Error, Result};
use crate::generator::{RateFamily, RateMatrix, ScoreProvider};

/// Backward chain indexed by backward time `τ ∈ [0, T]`:
/// `Λ̄_τ(y, x) = ŝ_{T-τ}(x, y) Λ_{T-τ}(x, y)`.
pub struct BackwardFamily<'a, F: RateFamily + ?Sized, S: ScoreProvider + ?Sized> {
    pub forward: &'a F,
    pub score: &'a S,
    pub horizon: f64,
}

impl<F: RateFamily + ?Sized, S: ScoreProvider + ?Sized> BackwardFamily<'_, F, S> {
    pub fn try_at(&self, tau: f64) -> Result<RateMatrix> {
        let t = (self.horizon - tau).max(0.0);
        self.forward.at(t).backward(&self.score.score(t))
    }
}

impl<F: RateFamily + ?Sized, S: ScoreProvider + ?Sized> RateFamily for BackwardFamily<'_, F, S> {
    fn size(&self) -> usize {
        self.forward.size()
    }

    fn at(&self, tau: f64) -> RateMatrix {
        self.try_at(tau).expect("score provider returned a non-positive ratio")
    }

    fn exit_rate_bound(&self, _t0: f64, _t1: f64) -> Option<f64> {
        None
    }
}

/// `Σ_x p(x) ln(p(x) / q(x))`, with `0 ln 0 = 0`; infinite if `q` misses mass of `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a < 0.0 || b < 0.0 {
            return Err(Error::InvalidDensity("negative entry in KL argument".into()));
        }
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += a * (a / b).ln();
    }
    Ok(acc.max(0.0))
}

/// `½ Σ |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p.len(), q.len())?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

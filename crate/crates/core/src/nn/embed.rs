use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature map applied to the state before the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateEmbedding {
    Raw,
    /// `log x`, for positive states.
    Log,
    /// `(cos 2πku, sin 2πku)` for `k = 1..=modes` per axis; exactly 1-periodic.
    Fourier { modes: usize },
}

impl StateEmbedding {
    pub fn width(&self, dim: usize) -> usize {
        match self {
            StateEmbedding::Raw | StateEmbedding::Log => dim,
            StateEmbedding::Fourier { modes } => 2 * modes * dim,
        }
    }
}

/// Input embedding `(t, x) ↦ [state features, t/T, sin(π2ʲ t/T), cos(π2ʲ t/T)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Embedding {
    pub state: StateEmbedding,
    pub dim: usize,
    pub horizon: f64,
    #[serde(default = "default_frequencies")]
    pub time_frequencies: usize,
}

fn default_frequencies() -> usize {
    4
}

impl Embedding {
    pub fn new(state: StateEmbedding, dim: usize, horizon: f64) -> Self {
        Self { state, dim, horizon, time_frequencies: default_frequencies() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("invalid embedding {self:?}")));
        }
        if let StateEmbedding::Fourier { modes: 0 } = self.state {
            return Err(Error::Config("Fourier embedding needs at least one mode".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.state.width(self.dim) + 1 + 2 * self.time_frequencies
    }

    /// Writes the features of one input into `out`.
    pub fn features_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if out.len() != self.width() {
            return Err(Error::DimensionMismatch { expected: self.width(), got: out.len() });
        }
        let mut k = 0;
        match self.state {
            StateEmbedding::Raw => {
                out[..self.dim].copy_from_slice(x);
                k = self.dim;
            }
            StateEmbedding::Log => {
                for &v in x {
                    if !(v > 0.0) {
                        return Err(Error::Domain(format!("log embedding needs positive states, got {v}")));
                    }
                    out[k] = v.ln();
                    k += 1;
                }
            }
            StateEmbedding::Fourier { modes } => {
                for &u in x {
                    // integer shifts cancel before the phase is formed
                    let u = u.rem_euclid(1.0);
                    for m in 1..=modes {
                        let (s, c) = (2.0 * PI * m as f64 * u).sin_cos();
                        out[k] = c;
                        out[k + 1] = s;
                        k += 2;
                    }
                }
            }
        }
        let tau = t / self.horizon;
        out[k] = tau;
        k += 1;
        for j in 0..self.time_frequencies {
            let (s, c) = (PI * (1u64 << j) as f64 * tau).sin_cos();
            out[k] = s;
            out[k + 1] = c;
            k += 2;
        }
        Ok(())
    }

    pub fn features(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.features_into(t, x, &mut out)?;
        Ok(out)
    }

    /// Feature matrix for rows `(ts[i], xs[i])`.
    pub fn batch<X: AsRef<[f64]>>(&self, ts: &[f64], xs: &[X]) -> Result<Array2<f64>> {
        if ts.len() != xs.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ts.len() });
        }
        let w = self.width();
        let mut m = Array2::zeros((xs.len(), w));
        for (i, (t, x)) in ts.iter().zip(xs).enumerate() {
            let row = m.row_mut(i).into_slice().expect("standard layout");
            self.features_into(*t, x.as_ref(), row)?;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_is_periodic() {
        let e = Embedding::new(StateEmbedding::Fourier { modes: 5 }, 2, 4.0);
        assert_eq!(e.width(), 20 + 9);
        assert_eq!(e.features(1.0, &[0.25, 0.75]).unwrap(), e.features(1.0, &[1.25, -0.25]).unwrap());
        let a = e.features(1.0, &[0.3, 0.71]).unwrap();
        let b = e.features(1.0, &[1.3, -0.29]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn log_embedding_rejects_nonpositive() {
        let e = Embedding::new(StateEmbedding::Log, 1, 1.0);
        assert!(e.features(0.5, &[0.0]).is_err());
        let f = e.features(0.5, &[1e-6]).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
        assert!((f[0] - 1e-6f64.ln()).abs() < 1e-12);
        assert_eq!(f[1], 0.5);
    }
}

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{GbmPrior, NetConfig};
use super::engine::{Engine, Sampler};
use crate::diffusion::{quadratic_term, DiffusionProcess, DiffusionScore, GbmSpec, Ou};
use crate::error::{Error, Result};
use crate::jump::JumpStepStats;
use crate::nn::{Embedding, ScoreNet, StateEmbedding};
use crate::rng::split;
use crate::time::TimeDistribution;

/// Forward diffusion of a [`DiffusionEngine`].
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionKind {
    Ou(Ou),
    Gbm(GbmSpec),
}

impl DiffusionKind {
    pub fn process(&self) -> &dyn DiffusionProcess {
        match self {
            DiffusionKind::Ou(p) => p,
            DiffusionKind::Gbm(p) => p,
        }
    }
}

/// Initial law of the backward sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionPrior {
    StandardNormal,
    /// `exp(N(mean, L Lᵀ))`, `chol` row-major lower triangular.
    LogNormal { mean: Vec<f64>, chol: Vec<f64> },
    AbsNormal { var: f64 },
}

/// Diffusion engine. The OU head outputs `ŝ` directly; the GBM head outputs
/// `u = x ⊙ ŝ`, which stays bounded as `x → 0` and is what the log-space
/// stepper consumes.
pub struct DiffusionEngine {
    pub kind: DiffusionKind,
    pub data: Vec<Vec<f64>>,
    pub horizon: f64,
    pub prior: DiffusionPrior,
}

/// Log-moments of `data` pushed to time `T` under GBM:
/// `log x_T = log x_0 + √T Σ z - T diag(A)/2`.
pub fn gbm_lognormal_fit(process: &GbmSpec, data: &[Vec<f64>], horizon: f64) -> Result<DiffusionPrior> {
    let d = process.dim();
    if data.len() < 2 {
        return Err(Error::Domain("log-normal fit needs at least two samples".into()));
    }
    let logs: Vec<Vec<f64>> = data
        .iter()
        .map(|x| {
            if x.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Domain(format!("GBM data must be positive, got {x:?}")));
            }
            Ok(x.iter().map(|v| v.ln()).collect())
        })
        .collect::<Result<_>>()?;
    let n = logs.len() as f64;
    let mean0: Vec<f64> = (0..d).map(|i| logs.iter().map(|l| l[i]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for l in &logs {
        let e = DVector::from_iterator(d, (0..d).map(|i| l[i] - mean0[i]));
        cov += &e * e.transpose() / (n - 1.0);
    }
    cov += DMatrix::from_row_slice(d, d, process.a()) * horizon;
    let chol = cov.cholesky().ok_or_else(|| Error::NotPsd("pushed log-covariance".into()))?.l();
    let mean = (0..d).map(|i| mean0[i] - 0.5 * horizon * process.diag_a()[i]).collect();
    let chol = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| chol[(i, j)]).collect();
    Ok(DiffusionPrior::LogNormal { mean, chol })
}

impl DiffusionEngine {
    pub fn new(kind: DiffusionKind, data: Vec<Vec<f64>>, horizon: f64, prior: DiffusionPrior) -> Result<Self> {
        let d = kind.process().dim();
        if data.is_empty() || data.iter().any(|x| x.len() != d) {
            return Err(Error::Domain(format!("diffusion dataset must be nonempty with {d}-dimensional points")));
        }
        Ok(Self { kind, data, horizon, prior })
    }

    pub fn gbm(process: GbmSpec, prior: GbmPrior, data: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        let p = match prior {
            GbmPrior::LogNormalFit => gbm_lognormal_fit(&process, &data, horizon)?,
            GbmPrior::AbsNormal { var } => DiffusionPrior::AbsNormal { var },
        };
        Self::new(DiffusionKind::Gbm(process), data, horizon, p)
    }

    pub fn dim(&self) -> usize {
        self.kind.process().dim()
    }

    fn scaled_head(&self) -> bool {
        matches!(self.kind, DiffusionKind::Gbm(_))
    }

    /// `ŝ` from one network output row at state `x`.
    pub fn head_score(&self, out: &[f64], x: &[f64]) -> Vec<f64> {
        if self.scaled_head() {
            out.iter().zip(x).map(|(u, v)| u / v).collect()
        } else {
            out.to_vec()
        }
    }

    /// Network scores at `(t, x)`.
    pub fn net_score(&self, net: &ScoreNet, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.head_score(&net.eval_one(t, x)?, x))
    }
}

struct Draw {
    t: f64,
    xt: Vec<f64>,
    target: Vec<f64>,
    d: Vec<f64>,
}

impl Engine for DiffusionEngine {
    type State = Vec<f64>;

    fn embedding(&self, net: &NetConfig) -> Embedding {
        let state = if self.scaled_head() { StateEmbedding::Log } else { StateEmbedding::Raw };
        Embedding { state, dim: self.dim(), horizon: self.horizon, time_frequencies: net.time_frequencies }
    }

    fn output_dim(&self) -> usize {
        self.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn loss_and_grad(
        &self,
        net: &ScoreNet,
        psi: &TimeDistribution,
        batch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>)> {
        let p = self.kind.process();
        let draws = split(rng, batch)
            .into_par_iter()
            .map(|mut r| {
                let x0 = &self.data[r.random_range(0..self.data.len())];
                let t = psi.sample(&mut r);
                let xt = p.conditional_sample(x0, t, &mut r)?;
                let target = p.conditional_score(x0, &xt, t)?;
                let d = p.fields(t, &xt)?.d;
                Ok(Draw { t, xt, target, d })
            })
            .collect::<Result<Vec<_>>>()?;
        let ts: Vec<f64> = draws.iter().map(|d| d.t).collect();
        let xs: Vec<&[f64]> = draws.iter().map(|d| d.xt.as_slice()).collect();
        let n = self.dim();
        net.value_and_grad(&ts, &xs, |out| {
            let mut d_out = Array2::zeros(out.dim());
            let mut total = 0.0;
            for (k, d) in draws.iter().enumerate() {
                let row: Vec<f64> = out.row(k).to_vec();
                let s_hat = self.head_score(&row, &d.xt);
                let term = quadratic_term(&d.d, &s_hat, &d.target);
                if !term.is_finite() {
                    return Err(Error::NonFinite(format!("loss term at t = {}, x_t = {:?}", d.t, d.xt)));
                }
                total += term;
                for i in 0..n {
                    // ∂/∂ŝ_i = (D e)_i, chained through ŝ = u / x for the scaled head
                    let de: f64 = (0..n).map(|j| d.d[i * n + j] * (s_hat[j] - d.target[j])).sum();
                    let g = if self.scaled_head() { de / d.xt[i] } else { de };
                    d_out[[k, i]] = g / batch as f64;
                }
            }
            Ok((total / batch as f64, d_out))
        })
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        Ok(match &self.prior {
            DiffusionPrior::StandardNormal => (0..n).map(|_| z()).collect(),
            DiffusionPrior::AbsNormal { var } => (0..n).map(|_| (var.sqrt() * z()).abs()).collect(),
            DiffusionPrior::LogNormal { mean, chol } => {
                let zs: Vec<f64> = (0..n).map(|_| z()).collect();
                (0..n).map(|i| (mean[i] + (0..=i).map(|j| chol[i * n + j] * zs[j]).sum::<f64>()).exp()).collect()
            }
        })
    }
}

fn step_all(
    engine: &DiffusionEngine,
    states: &mut [Vec<f64>],
    rngs: &mut [ChaCha8Rng],
    scores: Vec<Vec<f64>>,
    t: f64,
    kappa: f64,
) -> Result<JumpStepStats> {
    let p = engine.kind.process();
    let n = engine.dim();
    states
        .par_iter_mut()
        .zip(rngs.par_iter_mut())
        .zip(scores.par_iter())
        .map(|((y, r), s)| {
            let xi: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
            *y = p.backward_step(y, t, kappa, s, &xi)?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(JumpStepStats::default())
}

/// Euler–Maruyama (log-space for GBM) with a batched network evaluation.
impl Sampler<ScoreNet> for DiffusionEngine {
    type State = Vec<f64>;

    fn step_batch(
        &self,
        model: &ScoreNet,
        states: &mut [Vec<f64>],
        rngs: &mut [ChaCha8Rng],
        t: f64,
        kappa: f64,
    ) -> Result<JumpStepStats> {
        let ts = vec![t; states.len()];
        let out = model.eval(&ts, states)?;
        let scores = states.iter().enumerate().map(|(i, y)| self.head_score(&out.row(i).to_vec(), y)).collect();
        step_all(self, states, rngs, scores, t, kappa)
    }
}

impl Sampler<dyn DiffusionScore + '_> for DiffusionEngine {
    type State = Vec<f64>;

    fn step_batch(
        &self,
        model: &(dyn DiffusionScore + '_),
        states: &mut [Vec<f64>],
        rngs: &mut [ChaCha8Rng],
        t: f64,
        kappa: f64,
    ) -> Result<JumpStepStats> {
        let scores = states.iter().map(|y| model.score(t, y)).collect();
        step_all(self, states, rngs, scores, t, kappa)
    }
}

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jump::JumpStepStats;
use crate::nn::{AdamState, Embedding, ScoreNet};
use crate::rng::split;
use crate::time::{TimeDistribution, TimeGrid};

use super::config::TrainConfig;

/// A forward process with a trainable score head.
pub trait Engine: Sync {
    type State: Clone + Send + Sync;

    /// Input embedding of the score network.
    fn embedding(&self, net: &super::NetConfig) -> Embedding;

    fn output_dim(&self) -> usize;

    fn horizon(&self) -> f64;

    /// Empirical score-matching loss on `batch` fresh draws of
    /// `(x0, t ~ Ψ, x_t ~ p_{t|0})` and its gradient in the network parameters.
    fn loss_and_grad(
        &self,
        net: &ScoreNet,
        psi: &TimeDistribution,
        batch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>)>;

    /// Default initial law `q_0` of the backward sampler.
    fn prior_sample(&self, rng: &mut dyn RngCore) -> Result<Self::State>;
}

/// One-step backward conditional for a given score model.
pub trait Sampler<M: ?Sized>: Sync {
    type State: Clone + Send + Sync;

    /// Advances every state by one step of length `kappa`, coefficients frozen at
    /// forward time `t`. `rngs[i]` belongs to `states[i]`.
    fn step_batch(
        &self,
        model: &M,
        states: &mut [Self::State],
        rngs: &mut [ChaCha8Rng],
        t: f64,
        kappa: f64,
    ) -> Result<JumpStepStats>;
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ScoreNet,
    /// Batch loss of every epoch.
    pub history: Vec<f64>,
}

/// Adam on the empirical score-matching loss, one batch per epoch.
/// `checkpoint(epoch, net)` runs every `checkpoint_every` epochs and after the last.
pub fn train<E: Engine>(
    engine: &E,
    mut net: ScoreNet,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut checkpoint: impl FnMut(usize, &ScoreNet) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate_loop()?;
    if net.output_dim() != engine.output_dim() {
        return Err(Error::DimensionMismatch { expected: engine.output_dim(), got: net.output_dim() });
    }
    let psi = cfg.psi();
    let mut adam = AdamState::new(cfg.adam, net.params().len());
    let mut params = net.params().to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = engine.loss_and_grad(&net, &psi, cfg.batch, rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss} at epoch {epoch}")));
        }
        adam.step(&mut params, &grad)?;
        net.set_params(&params)?;
        history.push(loss);
        let done = epoch + 1;
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) || done == cfg.epochs {
            checkpoint(done, &net)?;
        }
    }
    Ok(TrainOutcome { net, history })
}

/// All intermediate states of a backward run.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch<S> {
    /// Backward times `τ_l = l κ`, `l = 0..=L`.
    pub times: Vec<f64>,
    /// `states[l][i]`: sample `i` at `τ_l`.
    pub states: Vec<Vec<S>>,
    pub stats: JumpStepStats,
}

impl<S> TrajectoryBatch<S> {
    pub fn terminal(&self) -> &[S] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Index of the stored time closest to `tau`.
    pub fn nearest(&self, tau: f64) -> usize {
        let mut best = 0;
        for (k, t) in self.times.iter().enumerate() {
            if (t - tau).abs() < (self.times[best] - tau).abs() {
                best = k;
            }
        }
        best
    }
}

/// Draws `n` samples from `q0` and applies the one-step conditional `L` times.
/// Sample `i` owns stream `i` of a seed drawn from `rng`.
pub fn infer<M, E>(
    grid: &TimeGrid,
    engine: &E,
    model: &M,
    q0: &(dyn Fn(&mut dyn RngCore) -> Result<E::State> + Sync),
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryBatch<E::State>>
where
    M: ?Sized,
    E: Sampler<M>,
{
    grid.validate()?;
    let mut rngs = split(rng, n);
    let mut cur = rngs.iter_mut().map(|r| q0(r)).collect::<Result<Vec<_>>>()?;
    let kappa = grid.kappa();
    let mut times = vec![0.0];
    let mut states = vec![cur.clone()];
    let mut stats = JumpStepStats::default();
    for l in 0..grid.steps {
        let t = grid.horizon - grid.time(l);
        let s = engine
            .step_batch(model, &mut cur, &mut rngs, t, kappa)
            .map_err(|e| Error::Step { step: l, source: Box::new(e) })?;
        stats.merge(&s);
        times.push(grid.time(l + 1));
        states.push(cur.clone());
    }
    Ok(TrajectoryBatch { times, states, stats })
}

//! Training and inference loops over the three engines, run configuration,
//! and the finite-state error decomposition.

mod config;
mod diffusion;
mod engine;
mod finite;
mod jump;
mod report;

pub use config::{
    EngineConfig, GbmPrior, GridConfig, NetConfig, OutputConfig, PsiKind, RunConfig, TrainConfig, SCHEMA_VERSION,
};
pub use diffusion::{gbm_lognormal_fit, DiffusionEngine, DiffusionKind, DiffusionPrior};
pub use engine::{infer, train, Engine, Sampler, TrainOutcome, TrajectoryBatch};
pub use finite::FiniteEngine;
pub use jump::JumpEngine;
pub use report::{error_decomposition_report, ErrorReport, BACKWARD_END_GAP};

use rand_chacha::ChaCha8Rng;

use crate::data::{Samples, TargetSpec};
use crate::diffusion::Ou;
use crate::error::{Error, Result};
use crate::nn::ScoreNet;
use crate::rng::stream;

/// Stream indices derived from the run seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const DATA: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const INFER: u64 = 3;
    pub const EVAL: u64 = 4;
}

pub fn seed_stream(seed: u64, which: u64) -> ChaCha8Rng {
    stream(seed, which)
}

/// An engine built from a [`RunConfig`].
pub enum AnyEngine {
    Finite(FiniteEngine),
    Diffusion(DiffusionEngine),
    Jump(JumpEngine),
}

impl AnyEngine {
    /// Draws the training set from the target and builds the engine.
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let mut rng = seed_stream(cfg.train.seed, streams::DATA);
        let data = cfg.target.sample(cfg.train.dataset_size, &mut rng)?;
        Self::with_data(cfg, data)
    }

    pub fn with_data(cfg: &RunConfig, data: Samples) -> Result<Self> {
        let horizon = cfg.train.horizon;
        Ok(match (&cfg.engine, &cfg.target) {
            (EngineConfig::Finite { chain, .. }, TargetSpec::FiniteRandom { space, .. }) => {
                AnyEngine::Finite(FiniteEngine::new(*space, *chain, data.into_discrete()?, horizon)?)
            }
            (EngineConfig::Ou { .. }, t) => AnyEngine::Diffusion(DiffusionEngine::new(
                DiffusionKind::Ou(Ou { dim: t.dim() }),
                data.into_continuous()?,
                horizon,
                DiffusionPrior::StandardNormal,
            )?),
            (EngineConfig::Gbm { process, prior, .. }, _) => {
                AnyEngine::Diffusion(DiffusionEngine::gbm(process.clone(), *prior, data.into_continuous()?, horizon)?)
            }
            (EngineConfig::TorusJump { spec, inner, fourier_modes, .. }, _) => {
                let pts = data.into_continuous()?.into_iter().map(|p| [p[0], p[1]]).collect();
                AnyEngine::Jump(JumpEngine::new(*spec, pts, horizon, *inner, *fourier_modes)?)
            }
            (e, t) => return Err(Error::Config(format!("engine {e:?} cannot model target {t:?}"))),
        })
    }

    /// Freshly initialized network for this engine.
    pub fn init_net(&self, cfg: &RunConfig) -> Result<ScoreNet> {
        let net = cfg.engine.net();
        let mut rng = seed_stream(cfg.train.seed, streams::INIT);
        let (emb, out) = match self {
            AnyEngine::Finite(e) => (e.embedding(net), e.output_dim()),
            AnyEngine::Diffusion(e) => (e.embedding(net), e.output_dim()),
            AnyEngine::Jump(e) => (e.embedding(net), e.output_dim()),
        };
        ScoreNet::init(emb, net.hidden, net.layers, out, net.activation, &mut rng)
    }
}

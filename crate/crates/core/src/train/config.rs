use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::TargetSpec;
use crate::diffusion::GbmSpec;
use crate::error::{Error, Result};
use crate::finite::ChainKind;
use crate::jump::TorusJumpSpec;
use crate::nn::{AdamConfig, Activation};
use crate::time::{TimeDistribution, TimeGrid};

pub const SCHEMA_VERSION: u32 = 1;

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Number of linear maps.
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_time_frequencies")]
    pub time_frequencies: usize,
}

fn default_hidden() -> usize {
    128
}
fn default_layers() -> usize {
    5
}
fn default_time_frequencies() -> usize {
    4
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            layers: default_layers(),
            activation: Activation::default(),
            time_frequencies: default_time_frequencies(),
        }
    }
}

/// Initial law `q_0` of the GBM backward sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GbmPrior {
    /// Log-normal whose log-moments are those of the data pushed through the
    /// forward log-dynamics to time `T`.
    LogNormalFit,
    /// `|N(0, var I)|`.
    AbsNormal { var: f64 },
}

/// Forward process and engine-specific knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EngineConfig {
    Finite {
        chain: ChainKind,
        #[serde(default)]
        net: NetConfig,
    },
    Ou {
        #[serde(default)]
        net: NetConfig,
    },
    Gbm {
        process: GbmSpec,
        prior: GbmPrior,
        #[serde(default)]
        net: NetConfig,
    },
    TorusJump {
        #[serde(default)]
        spec: TorusJumpSpec,
        /// Kernel draws per sample in the loss.
        #[serde(default = "default_inner")]
        inner: usize,
        /// Fourier modes per axis of the input embedding.
        #[serde(default = "default_fourier")]
        fourier_modes: usize,
        #[serde(default)]
        net: NetConfig,
    },
}

fn default_inner() -> usize {
    4
}
fn default_fourier() -> usize {
    8
}

impl EngineConfig {
    pub fn net(&self) -> &NetConfig {
        match self {
            EngineConfig::Finite { net, .. }
            | EngineConfig::Ou { net }
            | EngineConfig::Gbm { net, .. }
            | EngineConfig::TorusJump { net, .. } => net,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiKind {
    #[default]
    Uniform,
    LogUniform,
}

/// Training loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub horizon: f64,
    pub t_min: f64,
    #[serde(default)]
    pub psi: PsiKind,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
    /// Size of the training set drawn from the target.
    pub dataset_size: usize,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_checkpoint_every() -> usize {
    500
}

impl TrainConfig {
    pub fn psi(&self) -> TimeDistribution {
        match self.psi {
            PsiKind::Uniform => TimeDistribution::Uniform { lo: self.t_min, hi: self.horizon },
            PsiKind::LogUniform => TimeDistribution::LogUniform { lo: self.t_min, hi: self.horizon },
        }
    }

    /// Checks everything except the epoch count, which may be zero when
    /// training is driven programmatically.
    pub fn validate_loop(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min < self.horizon && self.horizon.is_finite()) {
            return Err(Error::Config(format!("need 0 < t_min < T, got t_min = {}, T = {}", self.t_min, self.horizon)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.dataset_size == 0 {
            return Err(Error::Config("dataset must be nonempty".into()));
        }
        self.adam.validate()?;
        self.psi().validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        self.validate_loop()
    }
}

/// Inference grid and sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub steps: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Backward times at which snapshots are plotted; defaults to quarters of `T`.
    #[serde(default)]
    pub snapshots: Option<Vec<f64>>,
}

fn default_samples() -> usize {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub engine: EngineConfig,
    pub target: TargetSpec,
    pub train: TrainConfig,
    pub grid: GridConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(Error::Config(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(Error::Config("missing schema_version".into())),
        }
        let cfg: RunConfig = serde_json::from_value(raw).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.train.horizon, self.grid.steps)
    }

    /// Snapshot backward times, `{0, T/4, T/2, 3T/4, T}` unless configured.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let t = self.train.horizon;
        self.grid.snapshots.clone().unwrap_or_else(|| (0..=4).map(|k| k as f64 * t / 4.0).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", self.schema_version)));
        }
        self.train.validate()?;
        self.time_grid()?;
        let net = self.engine.net();
        if net.hidden == 0 || net.layers == 0 {
            return Err(Error::Config("network needs positive width and depth".into()));
        }
        let ok = match (&self.engine, &self.target) {
            (EngineConfig::Finite { chain, .. }, TargetSpec::FiniteRandom { space, .. }) => {
                space.validate()?;
                (*chain == ChainKind::Masked) == space.masked
            }
            (EngineConfig::Ou { .. }, t) => !matches!(t, TargetSpec::FiniteRandom { .. }),
            (EngineConfig::Gbm { process, .. }, t) => {
                use crate::diffusion::DiffusionProcess;
                matches!(t, TargetSpec::Gmm1dAbs | TargetSpec::Gmm2dAbs) && process.dim() == t.dim()
            }
            (EngineConfig::TorusJump { spec, inner, fourier_modes, .. }, t) => {
                spec.validate()?;
                t.is_torus() && *inner > 0 && *fourier_modes > 0
            }
            _ => false,
        };
        if !ok {
            return Err(Error::Config(format!("engine {:?} cannot model target {:?}", self.engine, self.target)));
        }
        if let Some(s) = &self.grid.snapshots {
            if s.iter().any(|v| !(*v >= 0.0 && *v <= self.train.horizon)) {
                return Err(Error::Config("snapshot times must lie in [0, T]".into()));
            }
        }
        if let EngineConfig::Gbm { prior: GbmPrior::AbsNormal { var }, .. } = &self.engine {
            if !(*var > 0.0) {
                return Err(Error::Config("prior variance must be positive".into()));
            }
        }
        Ok(())
    }
}

use thiserror::Error;

/// Errors produced by the `dmm` toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid rate matrix: {0}")]
    InvalidRate(String),

    #[error("non-positive score entry {value} at ({x}, {y})")]
    NonPositiveScore { x: usize, y: usize, value: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("tolerance {tol:e} not achieved: {what}")]
    Tolerance { what: String, tol: f64 },

    #[error("unbounded rate: {0}")]
    UnboundedRate(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("stale reference integral: built for version {built}, queried with {queried}")]
    StaleReference { built: u64, queried: u64 },

    #[error("rejection sampler acceptance rate {rate:.2e} below floor")]
    LowAcceptance { rate: f64 },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config hash mismatch: checkpoint has {expected}, config hashes to {got}")]
    HashMismatch { expected: String, got: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

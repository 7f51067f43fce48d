//! Target distributions and two-sample metrics.

mod metrics;
mod targets;

pub use metrics::{energy_distance, energy_distance_with, histogram_tv, EnergyEstimator, Metric};
pub use targets::{
    Samples, TargetSpec, CHESSBOARD_CELLS, GMM1D, GMM2D, MOONS_SCALE, SWISS_ROLL_SCALE, TORUS_JITTER,
};

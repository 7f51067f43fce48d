//! Exact discrete-diffusion machinery on `[S]^d`.

mod conditional;
mod evolve;
mod gillespie;
mod loss;
mod path_kl;
mod reverse;
mod space;

pub use conditional::{
    masked_conditional, uniform_conditional, uniform_decay_rate, ChainKind, ConditionalLawDiscrete,
    DiscreteConditional, KolmogorovConditional,
};
pub use evolve::{evolve_density, DensityPath, MarginalScore, EVOLVE_TOL, MARGINAL_FLOOR, RENORM_TOL};
pub use gillespie::{gillespie_sample, simulate_frozen, write_trajectories_csv, Trajectory};
pub use loss::{discrete_sm_loss, discrete_sm_loss_exact, discrete_sm_term, discrete_sm_term_grad};
pub use path_kl::{
    discretized_path_kl, discretized_path_kl_extrapolated, eta_form_path_kl, exact_path_kl, exact_path_kl_marginal,
    integrate_over_marginals, mc_path_kl, McEstimate, QUAD_REL_TOL,
};
pub use reverse::{kl_divergence, tv_distance, BackwardFamily};
pub use space::{build_masked_rate, build_uniform_rate, DiscreteSpace, MAX_STATES};

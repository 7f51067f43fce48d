//! Denoising Markov models built around the generator of the forward process.
//!
//! Three forward families are supported: finite-state continuous-time Markov
//! chains, diffusions (Ornstein–Uhlenbeck and geometric Brownian motion) and a
//! pure-jump compound Poisson process on the two-torus. Each comes with exact
//! conditionals, a score-matching loss and a backward sampler.

// `!(a > b)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diffusion;
pub mod error;
pub mod finite;
pub mod generator;
pub mod io;
pub mod jump;
pub mod nn;
pub mod quadrature;
pub mod rng;
pub mod run;
pub mod time;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

//! Bayesian low-rank tensor regression.
//!
//! A rank-adaptive Gaussian prior on CP factors, conjugate Gibbs sampling
//! with birth/death rank moves, rejection-filtered posterior means, and
//! evaluators for the accompanying convergence-rate bounds.

pub mod bounds;
pub mod designs;
pub mod error;
pub mod harness;
pub mod norms;
pub mod sampler;
pub mod tensor;
pub mod textio;

pub use designs::{DesignKind, DesignSet, GatePolicy, NoiseSpec, Observation, SparseMeasurement};
pub use error::{Error, Result};
pub use norms::{empirical_sq_norm, inner_product, norm, population_sq_norm_uniform, NormKind};
pub use sampler::{ChainConfig, Hyperparams, PosteriorSummary, Rejection, SamplerState};
pub use tensor::{CpFactors, DenseTensor, Shape};

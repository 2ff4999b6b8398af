//! Maximum-likelihood learning of energy-based models `p(x) ∝ exp(-U(x; θ))`
//! whose energy is a small neural network, with Langevin MCMC for the
//! negative samples.
//!
//! Besides the learning loop, the crate carries the tools for telling the
//! two learning regimes apart: the energy-gap / gradient-strength series
//! recorded at every step, a long-run steady-state audit, exact reference
//! densities in two dimensions, and a basin mapper for learned landscapes.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod landscape;
pub mod numerics;
pub mod potential;
pub mod rng;
pub mod plot;
pub mod sampler;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Energy, GradientPair, ParametricEnergy, Tensor};
pub use potential::{Potential, PotentialSpec};
pub use sampler::{ChainResult, InitMode, PersistentBank, SamplerConfig};
pub use diagnostics::{DiagnosticsRecord, SeriesStats};
pub use trainer::{TrainerConfig, Preset};

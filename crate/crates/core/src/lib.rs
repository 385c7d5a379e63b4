//! Bayesian correction of exposure misclassification in individual
//! participant data (IPD) meta-analysis.
//!
//! A binary exposure `x` is measured without error in some studies and only
//! through an error-prone surrogate `x_star` elsewhere. The joint model
//! combines a measurement model `P(x_star | x, z, y)`, an exposure model
//! `P(x | z)` and an outcome model `P(y | x, z)`, each a logistic regression
//! with optional study-level random effects, and is fitted by
//! Metropolis-within-Gibbs sampling with the unobserved `x` treated as
//! latent.

pub mod comparators;
pub mod data;
pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod likelihood;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simstudy;
pub mod simulate;

pub use data::{validate_dataset, IpdDataset, ParticipantRecord, ValidationReport};
pub use diagnostics::{summarize, ParamSummary, PosteriorSummary};
pub use draws::DrawsMatrix;
pub use error::{Error, Result};
pub use model::{preset, ModelSpec, PriorConfig};
pub use sampler::{fit, SamplerConfig};

//! Bayesian latent-state inference from repeated noisy binary ratings.
//!
//! A stochastic classifier rates each item several times. The model treats the
//! true binary state of every item as latent, estimates the classifier's false
//! positive and false negative rates jointly with a logistic regression for the
//! latent state, and reports per-item posterior probabilities and the average
//! treatment effect. Posterior inference uses the in-crate HMC sampler.

pub mod analysis;
pub mod baselines;
pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod sampler;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{CallRecord, ModelKind, Params, PriorConfig, RatingDataset};
pub use sampler::{PosteriorDraws, SamplerConfig};

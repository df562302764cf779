//! The latent-state rating model: data types, parameterizations, likelihood,
//! priors and the differentiable posterior used by the sampler.

pub mod data;
pub mod likelihood;
pub mod math;
pub mod params;
pub mod posterior;

pub use data::{CallRecord, RatingDataset};
pub use likelihood::{
    call_error_rates, error_rates, linear_predictor, log_binom_component, log_lik_call, log_lik_mixture,
    log_prior, mixture_log_components, theta_c,
};
pub use params::{
    constrain, unconstrain, BaseParams, ErrorPrior, ExtParams, ModelKind, ParamLayout, Params, PriorConfig,
    UnconstrainedVector,
};
pub use posterior::{grad_log_posterior, log_posterior, params_at, LatentModel};

//! Pointwise model quantities on constrained parameters.
//!
//! These functions are the readable reference path. The sampler uses the fused
//! evaluator in [`super::posterior`], which is checked against them in tests.

use super::data::CallRecord;
use super::math::{inv_logit, ln_choose, log_inv_logit, log_sum_exp2, lognormal_lpdf, normal_lpdf};
use super::params::{ModelKind, Params, PriorConfig};
use crate::error::{Error, Result};

/// Linear predictor `θ + x·β + τ·T` on the log-odds scale.
pub fn linear_predictor(params: &Params, record: &CallRecord) -> Result<f64> {
    let betas = params.betas();
    if betas.len() != record.covariates.len() {
        return Err(Error::Config(format!(
            "call {}: {} covariates but {} slopes",
            record.call_id,
            record.covariates.len(),
            betas.len()
        )));
    }
    let xb: f64 = betas.iter().zip(&record.covariates).map(|(b, x)| b * x).sum();
    let t = if record.treatment { params.tau() } else { 0.0 };
    Ok(params.intercept() + xb + t)
}

/// Prior probability that the call is dissatisfied.
pub fn theta_c(params: &Params, record: &CallRecord) -> Result<f64> {
    linear_predictor(params, record).map(inv_logit)
}

/// Per-call false-positive and false-negative rates of the extended model:
/// `0.5 · inv_logit(α + γ·H)`.
pub fn error_rates(alpha0: f64, gamma0: f64, alpha1: f64, gamma1: f64, difficulty: f64) -> Result<(f64, f64)> {
    if !difficulty.is_finite() {
        return Err(Error::Input(format!("non-finite difficulty {difficulty}")));
    }
    Ok((
        0.5 * inv_logit(alpha0 + gamma0 * difficulty),
        0.5 * inv_logit(alpha1 + gamma1 * difficulty),
    ))
}

/// `ln Binom(k; n, p)`. The boundary values p = 0 and p = 1 give the exact limits.
pub fn log_binom_component(k: u32, n: u32, p_positive: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Input(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&p_positive) {
        return Err(Error::Input(format!("probability {p_positive} outside [0, 1]")));
    }
    if p_positive == 0.0 {
        return Ok(if k == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if p_positive == 1.0 {
        return Ok(if k == n { 0.0 } else { f64::NEG_INFINITY });
    }
    let (kf, rest) = (k as f64, (n - k) as f64);
    Ok(ln_choose(n, k) + kf * p_positive.ln() + rest * (-p_positive).ln_1p())
}

/// The (false-positive, false-negative) rates that apply to one call.
pub fn call_error_rates(params: &Params, record: &CallRecord) -> Result<(f64, f64)> {
    match params {
        Params::Base(p) => Ok((p.fpr, p.fnr)),
        Params::Extended(p) => {
            let h = record.difficulty.ok_or_else(|| {
                Error::Config(format!(
                    "extended model needs a difficulty score (call {})",
                    record.call_id
                ))
            })?;
            error_rates(p.alpha0, p.gamma0, p.alpha1, p.gamma1, h)
        }
    }
}

/// Joint log-probabilities of (k, D=0) and (k, D=1) for one call.
pub fn mixture_log_components(params: &Params, record: &CallRecord) -> Result<(f64, f64)> {
    let eta = linear_predictor(params, record)?;
    let (fpr, fnr) = call_error_rates(params, record)?;
    let (k, n) = (record.k_positive, record.n_ratings);
    let satisfied = log_inv_logit(-eta) + log_binom_component(k, n, fpr)?;
    let dissatisfied = log_inv_logit(eta) + log_binom_component(k, n, 1.0 - fnr)?;
    Ok((satisfied, dissatisfied))
}

/// Marginal log-likelihood of one call with the latent state summed out.
pub fn log_lik_call(params: &Params, record: &CallRecord) -> Result<f64> {
    let (a, b) = mixture_log_components(params, record)?;
    Ok(log_sum_exp2(a, b))
}

/// Same as [`log_lik_call`] but taking `θ_c` and the error rates directly.
pub fn log_lik_mixture(theta_c: f64, fpr: f64, fnr: f64, k: u32, n: u32) -> Result<f64> {
    let a = (1.0 - theta_c).ln() + log_binom_component(k, n, fpr)?;
    let b = theta_c.ln() + log_binom_component(k, n, 1.0 - fnr)?;
    Ok(log_sum_exp2(a, b))
}

/// Log prior density of constrained parameters. Error rates outside (0, 0.5)
/// give negative infinity.
pub fn log_prior(params: &Params, priors: &PriorConfig) -> f64 {
    let mut lp = normal_lpdf(params.intercept(), priors.mu_theta, priors.sigma_theta)
        + params
            .betas()
            .iter()
            .map(|&b| normal_lpdf(b, priors.mu_beta, priors.sigma_beta))
            .sum::<f64>()
        + normal_lpdf(params.tau(), priors.mu_tau, priors.sigma_tau);
    match params {
        Params::Base(p) => {
            for eps in [p.fpr, p.fnr] {
                if eps > 0.0 && eps < 0.5 {
                    lp += std::f64::consts::LN_2;
                } else {
                    return f64::NEG_INFINITY;
                }
            }
        }
        Params::Extended(p) => {
            lp += normal_lpdf(p.alpha0, priors.mu_alpha0, priors.sigma_alpha0)
                + normal_lpdf(p.alpha1, priors.mu_alpha1, priors.sigma_alpha1)
                + lognormal_lpdf(p.gamma0, priors.mu_gamma0, priors.sigma_gamma0)
                + lognormal_lpdf(p.gamma1, priors.mu_gamma1, priors.sigma_gamma1);
        }
    }
    lp
}

pub(crate) fn require_difficulty(kind: ModelKind, has_difficulty: bool) -> Result<()> {
    if kind == ModelKind::Extended && !has_difficulty {
        return Err(Error::Config(
            "the extended model requires a difficulty score for every call".into(),
        ));
    }
    Ok(())
}

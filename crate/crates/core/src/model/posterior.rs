//! Fused log-posterior and gradient in the sampler's unconstrained space.
//!
//! Parameter vector layout (see [`ParamLayout`]):
//! `[θ, β₁..β_P, τ, u_ε₀, u_ε₁]` for the base model, where `ε = 0.5·σ(u)`;
//! `[θ, β₁..β_P, τ, α₀, α₁, ln γ₀, ln γ₁]` for the extended model.
//!
//! The latent state is summed out per call. With `a` and `b` the joint log
//! probabilities of (k, D=0) and (k, D=1), the responsibility `r = σ(b − a)`
//! carries every gradient: `∂/∂η = r − θ_c`, and the error-rate terms are
//! weighted by `1 − r` and `r`.

use super::data::RatingDataset;
use super::likelihood::require_difficulty;
use super::math::{inv_logit, ln_choose, log_inv_logit, lognormal_lpdf, normal_lpdf, softplus_inv_logit, LN_HALF};
use super::params::{constrain, ModelKind, ParamLayout, Params, PriorConfig, UnconstrainedVector};
use crate::error::{Error, Result};
use crate::sampler::LogDensity;

/// A dataset and prior bound into a differentiable target.
#[derive(Debug, Clone)]
pub struct LatentModel {
    layout: ParamLayout,
    priors: PriorConfig,
    names: Vec<String>,
    k: Vec<f64>,
    n_minus_k: Vec<f64>,
    ln_choose_sum: f64,
    /// Row-major `n_calls × n_covariates`.
    x: Vec<f64>,
    treated: Vec<f64>,
    difficulty: Vec<f64>,
}

impl LatentModel {
    pub fn new(data: &RatingDataset, priors: &PriorConfig, kind: ModelKind) -> Result<Self> {
        priors.validate()?;
        require_difficulty(kind, data.has_difficulty())?;
        let layout = ParamLayout::new(kind, data.n_covariates());
        let n = data.len();
        let mut model = LatentModel {
            layout,
            priors: priors.clone(),
            names: layout.names(data.covariate_names()),
            k: Vec::with_capacity(n),
            n_minus_k: Vec::with_capacity(n),
            ln_choose_sum: 0.0,
            x: Vec::with_capacity(n * layout.n_covariates),
            treated: Vec::with_capacity(n),
            difficulty: Vec::with_capacity(n),
        };
        for r in data.records() {
            model.k.push(r.k_positive as f64);
            model.n_minus_k.push((r.n_ratings - r.k_positive) as f64);
            model.ln_choose_sum += ln_choose(r.n_ratings, r.k_positive);
            model.x.extend_from_slice(&r.covariates);
            model.treated.push(if r.treatment { 1.0 } else { 0.0 });
            model.difficulty.push(r.difficulty.unwrap_or(0.0));
        }
        Ok(model)
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn kind(&self) -> ModelKind {
        self.layout.kind
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn n_calls(&self) -> usize {
        self.k.len()
    }

    pub fn log_posterior(&self, u: &[f64]) -> Result<f64> {
        let mut grad = vec![0.0; u.len()];
        self.checked_eval(u, &mut grad)
    }

    pub fn grad_log_posterior(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; u.len()];
        self.checked_eval(u, &mut grad)?;
        Ok(grad)
    }

    fn checked_eval(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        if u.len() != self.layout.dim() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.layout.dim(),
                u.len()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("non-finite unconstrained parameter".into()));
        }
        let lp = self.eval(u, grad);
        if lp.is_finite() {
            Ok(lp)
        } else {
            Err(Error::Evaluation(format!("log posterior is {lp}")))
        }
    }

    /// Log posterior (including the log-Jacobian) and its gradient, written into `grad`.
    pub fn eval(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let p = self.layout.n_covariates;
        let tau_i = self.layout.tau_index();
        let e = self.layout.error_index();
        let (intercept, betas, tau) = (u[0], &u[1..1 + p], u[tau_i]);

        let mut lp = self.ln_choose_sum;
        lp += self.prior_and_jacobian(u, grad);

        match self.layout.kind {
            ModelKind::Base => {
                let (u0, u1) = (u[e], u[e + 1]);
                let eps0 = 0.5 * inv_logit(u0);
                let eps1 = 0.5 * inv_logit(u1);
                let ln_eps0 = LN_HALF + log_inv_logit(u0);
                let ln_eps1 = LN_HALF + log_inv_logit(u1);
                let ln_1m_eps0 = (-eps0).ln_1p();
                let ln_1m_eps1 = (-eps1).ln_1p();
                // responsibility-weighted rating counts
                let (mut s0k, mut s0nk, mut s1k, mut s1nk) = (0.0, 0.0, 0.0, 0.0);
                for c in 0..self.k.len() {
                    let xc = &self.x[c * p..(c + 1) * p];
                    let eta = intercept
                        + xc.iter().zip(betas).map(|(x, b)| x * b).sum::<f64>()
                        + tau * self.treated[c];
                    let (k, nk) = (self.k[c], self.n_minus_k[c]);
                    // ln(1 − θ_c) = −softplus(η), ln θ_c = η − softplus(η)
                    let (sp, theta) = softplus_inv_logit(eta);
                    let a = -sp + k * ln_eps0 + nk * ln_1m_eps0;
                    let b = eta - sp + k * ln_1m_eps1 + nk * ln_eps1;
                    let (sp_ba, r) = softplus_inv_logit(b - a);
                    lp += a + sp_ba;
                    let d_eta = r - theta;
                    grad[0] += d_eta;
                    for j in 0..p {
                        grad[1 + j] += d_eta * xc[j];
                    }
                    grad[tau_i] += d_eta * self.treated[c];
                    let q = 1.0 - r;
                    s0k += q * k;
                    s0nk += q * nk;
                    s1k += r * k;
                    s1nk += r * nk;
                }
                let d_eps0 = s0k / eps0 - s0nk / (1.0 - eps0);
                let d_eps1 = -s1k / (1.0 - eps1) + s1nk / eps1;
                grad[e] += d_eps0 * 0.5 * inv_logit(u0) * inv_logit(-u0);
                grad[e + 1] += d_eps1 * 0.5 * inv_logit(u1) * inv_logit(-u1);
            }
            ModelKind::Extended => {
                let (alpha0, alpha1) = (u[e], u[e + 1]);
                let (gamma0, gamma1) = (u[e + 2].exp(), u[e + 3].exp());
                let (mut g_a0, mut g_a1, mut g_g0, mut g_g1) = (0.0, 0.0, 0.0, 0.0);
                for c in 0..self.k.len() {
                    let xc = &self.x[c * p..(c + 1) * p];
                    let eta = intercept
                        + xc.iter().zip(betas).map(|(x, b)| x * b).sum::<f64>()
                        + tau * self.treated[c];
                    let h = self.difficulty[c];
                    let z0 = alpha0 + gamma0 * h;
                    let z1 = alpha1 + gamma1 * h;
                    // ln σ(z) = z − softplus(z)
                    let (sp0, s0) = softplus_inv_logit(z0);
                    let (sp1, s1) = softplus_inv_logit(z1);
                    let (eps0, eps1) = (0.5 * s0, 0.5 * s1);
                    let (k, nk) = (self.k[c], self.n_minus_k[c]);
                    let (sp, theta) = softplus_inv_logit(eta);
                    let a = -sp + k * (LN_HALF + z0 - sp0) + nk * (-eps0).ln_1p();
                    let b = eta - sp + k * (-eps1).ln_1p() + nk * (LN_HALF + z1 - sp1);
                    let (sp_ba, r) = softplus_inv_logit(b - a);
                    lp += a + sp_ba;
                    let d_eta = r - theta;
                    grad[0] += d_eta;
                    for j in 0..p {
                        grad[1 + j] += d_eta * xc[j];
                    }
                    grad[tau_i] += d_eta * self.treated[c];
                    // dε/dz = 0.5·σ(z)·σ(−z)
                    let de0 = 0.5 * s0 * (1.0 - s0);
                    let de1 = 0.5 * s1 * (1.0 - s1);
                    let dz0 = (1.0 - r) * (k / eps0 - nk / (1.0 - eps0)) * de0;
                    let dz1 = r * (-k / (1.0 - eps1) + nk / eps1) * de1;
                    g_a0 += dz0;
                    g_a1 += dz1;
                    g_g0 += dz0 * h;
                    g_g1 += dz1 * h;
                }
                grad[e] += g_a0;
                grad[e + 1] += g_a1;
                grad[e + 2] += g_g0 * gamma0;
                grad[e + 3] += g_g1 * gamma1;
            }
        }
        lp
    }

    /// Log prior plus log-Jacobian in unconstrained coordinates; adds their gradient.
    fn prior_and_jacobian(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let pr = &self.priors;
        let p = self.layout.n_covariates;
        let tau_i = self.layout.tau_index();
        let e = self.layout.error_index();
        let mut lp = normal_term(u, grad, 0, pr.mu_theta, pr.sigma_theta);
        for j in 0..p {
            lp += normal_term(u, grad, 1 + j, pr.mu_beta, pr.sigma_beta);
        }
        lp += normal_term(u, grad, tau_i, pr.mu_tau, pr.sigma_tau);
        match self.layout.kind {
            ModelKind::Base => {
                for i in [e, e + 1] {
                    // truncated uniform density 2, then the 0.5·σ(u) Jacobian
                    lp += std::f64::consts::LN_2 + LN_HALF + log_inv_logit(u[i]) + log_inv_logit(-u[i]);
                    grad[i] += 1.0 - 2.0 * inv_logit(u[i]);
                }
            }
            ModelKind::Extended => {
                lp += normal_term(u, grad, e, pr.mu_alpha0, pr.sigma_alpha0);
                lp += normal_term(u, grad, e + 1, pr.mu_alpha1, pr.sigma_alpha1);
                for (i, mu, sigma) in [
                    (e + 2, pr.mu_gamma0, pr.sigma_gamma0),
                    (e + 3, pr.mu_gamma1, pr.sigma_gamma1),
                ] {
                    // lognormal density of γ = e^u plus the Jacobian u
                    lp += lognormal_lpdf(u[i].exp(), mu, sigma) + u[i];
                    grad[i] -= (u[i] - mu) / (sigma * sigma);
                }
            }
        }
        lp
    }
}

#[inline]
fn normal_term(u: &[f64], grad: &mut [f64], i: usize, mu: f64, sigma: f64) -> f64 {
    grad[i] -= (u[i] - mu) / (sigma * sigma);
    normal_lpdf(u[i], mu, sigma)
}

impl LogDensity for LatentModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, grad)
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let u = UnconstrainedVector {
            values: x.to_vec(),
            kind: self.layout.kind,
        };
        constrain(&u).0.to_vec()
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

/// Log posterior of `u` under `data` and `priors`.
pub fn log_posterior(u: &UnconstrainedVector, data: &RatingDataset, priors: &PriorConfig) -> Result<f64> {
    check_dims(u, data)?;
    LatentModel::new(data, priors, u.kind)?.log_posterior(&u.values)
}

/// Gradient of [`log_posterior`] with respect to `u`.
pub fn grad_log_posterior(u: &UnconstrainedVector, data: &RatingDataset, priors: &PriorConfig) -> Result<Vec<f64>> {
    check_dims(u, data)?;
    LatentModel::new(data, priors, u.kind)?.grad_log_posterior(&u.values)
}

fn check_dims(u: &UnconstrainedVector, data: &RatingDataset) -> Result<()> {
    if u.layout().n_covariates != data.n_covariates() {
        return Err(Error::Config(format!(
            "parameter vector has {} slopes, dataset has {} covariates",
            u.layout().n_covariates,
            data.n_covariates()
        )));
    }
    Ok(())
}

/// Constrained parameters at `u`.
pub fn params_at(kind: ModelKind, u: &[f64]) -> Result<Params> {
    Ok(constrain(&UnconstrainedVector::new(kind, u.to_vec())?).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::data::CallRecord;
    use crate::model::likelihood::{log_lik_call, log_prior};
    use approx::assert_relative_eq;

    fn one_call(difficulty: Option<f64>) -> RatingDataset {
        let mut r = CallRecord::new("c1", 3, 5, vec![0.4, 1.0], true);
        r.difficulty = difficulty;
        RatingDataset::new(vec![r], vec!["x1".into(), "x2".into()]).unwrap()
    }

    #[test]
    fn composes_prior_likelihood_and_jacobian() {
        let data = one_call(None);
        let priors = PriorConfig::default();
        let u = UnconstrainedVector::new(ModelKind::Base, vec![-1.0, 0.3, -0.2, -0.5, -1.2, 0.7]).unwrap();
        let (params, lj) = constrain(&u);
        let expected = log_prior(&params, &priors) + log_lik_call(&params, &data.records()[0]).unwrap() + lj;
        assert_relative_eq!(log_posterior(&u, &data, &priors).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn composes_for_extended_model() {
        let data = one_call(Some(0.35));
        let priors = PriorConfig::default();
        let u = UnconstrainedVector::new(ModelKind::Extended, vec![-1.0, 0.3, -0.2, -0.5, -1.4, -1.6, 1.1, 0.2]).unwrap();
        let (params, lj) = constrain(&u);
        let expected = log_prior(&params, &priors) + log_lik_call(&params, &data.records()[0]).unwrap() + lj;
        assert_relative_eq!(log_posterior(&u, &data, &priors).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_missing_difficulty() {
        let data = one_call(None);
        let priors = PriorConfig::default();
        let u = UnconstrainedVector::new(ModelKind::Base, vec![f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(log_posterior(&u, &data, &priors), Err(Error::Evaluation(_))));
        let u = UnconstrainedVector::new(ModelKind::Extended, vec![0.0; 8]).unwrap();
        assert!(matches!(log_posterior(&u, &data, &priors), Err(Error::Config(_))));
    }

    #[test]
    fn theta_score_vanishes_at_prior_mean_without_data_pull() {
        // one call exactly balanced between the classes contributes r − θ_c = 0 when
        // ε₀ = ε₁ and k = n/2 with θ_c = 1/2; the prior score is zero at its mean.
        let r = CallRecord::new("c", 1, 2, vec![], false);
        let data = RatingDataset::new(vec![r], vec![]).unwrap();
        let priors = PriorConfig {
            mu_theta: 0.0,
            ..PriorConfig::default()
        };
        let m = LatentModel::new(&data, &priors, ModelKind::Base).unwrap();
        let g = m.grad_log_posterior(&[0.0, 0.0, -1.0, -1.0]).unwrap();
        assert!(g[0].abs() < 1e-14);
    }
}

use serde::{Deserialize, Serialize};

use super::math::{inv_logit, log_inv_logit, logit, LN_HALF};
use crate::error::{Error, Result};

/// Which error-rate structure is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// One false-positive and one false-negative rate shared by every call.
    Base,
    /// Per-call error rates driven by the difficulty score.
    Extended,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Base => "base",
            ModelKind::Extended => "extended",
        }
    }

    /// Number of parameters besides the covariate slopes.
    pub fn fixed_dim(self) -> usize {
        match self {
            ModelKind::Base => 4,
            ModelKind::Extended => 6,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(ModelKind::Base),
            "extended" | "ext" => Ok(ModelKind::Extended),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub intercept: f64,
    pub betas: Vec<f64>,
    pub tau: f64,
    /// False-positive rate, in (0, 0.5).
    pub fpr: f64,
    /// False-negative rate, in (0, 0.5).
    pub fnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtParams {
    pub intercept: f64,
    pub betas: Vec<f64>,
    pub tau: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
}

/// Constrained-space parameters of either model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Params {
    Base(BaseParams),
    Extended(ExtParams),
}

impl Params {
    pub fn kind(&self) -> ModelKind {
        match self {
            Params::Base(_) => ModelKind::Base,
            Params::Extended(_) => ModelKind::Extended,
        }
    }

    pub fn intercept(&self) -> f64 {
        match self {
            Params::Base(p) => p.intercept,
            Params::Extended(p) => p.intercept,
        }
    }

    pub fn betas(&self) -> &[f64] {
        match self {
            Params::Base(p) => &p.betas,
            Params::Extended(p) => &p.betas,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            Params::Base(p) => p.tau,
            Params::Extended(p) => p.tau,
        }
    }

    /// Flat constrained vector in [`ParamLayout`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.intercept()];
        v.extend_from_slice(self.betas());
        v.push(self.tau());
        match self {
            Params::Base(p) => v.extend([p.fpr, p.fnr]),
            Params::Extended(p) => v.extend([p.alpha0, p.alpha1, p.gamma0, p.gamma1]),
        }
        v
    }

    pub fn from_vec(kind: ModelKind, v: &[f64]) -> Result<Self> {
        let layout = ParamLayout::from_dim(kind, v.len())?;
        let p = layout.n_covariates;
        let betas = v[1..1 + p].to_vec();
        let tau = v[1 + p];
        let rest = &v[2 + p..];
        Ok(match kind {
            ModelKind::Base => Params::Base(BaseParams {
                intercept: v[0],
                betas,
                tau,
                fpr: rest[0],
                fnr: rest[1],
            }),
            ModelKind::Extended => Params::Extended(ExtParams {
                intercept: v[0],
                betas,
                tau,
                alpha0: rest[0],
                alpha1: rest[1],
                gamma0: rest[2],
                gamma1: rest[3],
            }),
        })
    }
}

/// Index bookkeeping for the flat parameter vector
/// `[intercept, betas.., tau, <error-model parameters>]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub kind: ModelKind,
    pub n_covariates: usize,
}

impl ParamLayout {
    pub fn new(kind: ModelKind, n_covariates: usize) -> Self {
        ParamLayout { kind, n_covariates }
    }

    pub fn from_dim(kind: ModelKind, dim: usize) -> Result<Self> {
        dim.checked_sub(kind.fixed_dim())
            .map(|p| ParamLayout::new(kind, p))
            .ok_or_else(|| {
                Error::Config(format!(
                    "{dim} parameters is too few for the {} model",
                    kind.as_str()
                ))
            })
    }

    pub fn dim(&self) -> usize {
        self.kind.fixed_dim() + self.n_covariates
    }

    pub fn tau_index(&self) -> usize {
        1 + self.n_covariates
    }

    /// Index of the first error-model parameter.
    pub fn error_index(&self) -> usize {
        2 + self.n_covariates
    }

    pub fn names(&self, covariate_names: &[String]) -> Vec<String> {
        let mut names = vec!["theta".to_string()];
        for j in 0..self.n_covariates {
            match covariate_names.get(j) {
                Some(c) => names.push(format!("beta[{c}]")),
                None => names.push(format!("beta[{j}]")),
            }
        }
        names.push("tau".into());
        match self.kind {
            ModelKind::Base => names.extend(["eps0".into(), "eps1".into()]),
            ModelKind::Extended => names.extend(
                ["alpha0", "alpha1", "gamma0", "gamma1"]
                    .iter()
                    .map(|s| s.to_string()),
            ),
        }
        names
    }
}

/// A point in the sampler's unconstrained space.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedVector {
    pub values: Vec<f64>,
    pub kind: ModelKind,
}

impl UnconstrainedVector {
    pub fn new(kind: ModelKind, values: Vec<f64>) -> Result<Self> {
        ParamLayout::from_dim(kind, values.len())?;
        Ok(UnconstrainedVector { values, kind })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.kind, self.values.len() - self.kind.fixed_dim())
    }
}

/// `0.5 * inv_logit(u)` and the log-Jacobian `ln 0.5 + ln σ(u) + ln σ(-u)`.
#[inline]
pub(crate) fn half_inv_logit_with_jacobian(u: f64) -> (f64, f64) {
    (
        0.5 * inv_logit(u),
        LN_HALF + log_inv_logit(u) + log_inv_logit(-u),
    )
}

/// Maps the unconstrained vector onto model parameters, returning the log-Jacobian.
pub fn constrain(u: &UnconstrainedVector) -> (Params, f64) {
    let v = &u.values;
    let layout = u.layout();
    let e = layout.error_index();
    let mut c = v.clone();
    let mut log_jac = 0.0;
    match u.kind {
        ModelKind::Base => {
            for i in [e, e + 1] {
                let (eps, lj) = half_inv_logit_with_jacobian(v[i]);
                c[i] = eps;
                log_jac += lj;
            }
        }
        ModelKind::Extended => {
            for i in [e + 2, e + 3] {
                c[i] = v[i].exp();
                log_jac += v[i];
            }
        }
    }
    let params = Params::from_vec(u.kind, &c).expect("layout checked on construction");
    (params, log_jac)
}

/// Inverse of [`constrain`].
pub fn unconstrain(params: &Params) -> Result<UnconstrainedVector> {
    let mut v = params.to_vec();
    let layout = ParamLayout::from_dim(params.kind(), v.len())?;
    let e = layout.error_index();
    match params.kind() {
        ModelKind::Base => {
            for i in [e, e + 1] {
                let eps = v[i];
                if !(eps > 0.0 && eps < 0.5) {
                    return Err(Error::Input(format!(
                        "error rate {eps} outside (0, 0.5)"
                    )));
                }
                v[i] = logit(2.0 * eps);
            }
        }
        ModelKind::Extended => {
            for i in [e + 2, e + 3] {
                if !(v[i] > 0.0) {
                    return Err(Error::Input(format!("slope {} must be positive", v[i])));
                }
                v[i] = v[i].ln();
            }
        }
    }
    UnconstrainedVector::new(params.kind(), v)
}

/// Prior for the homogeneous error rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorPrior {
    /// Beta(1, 1) truncated to (0, 0.5): constant density 2.
    #[default]
    TruncatedUniform,
}

/// Prior hyperparameters. Normal priors are given as (mean, sd); the slope priors
/// are lognormal with log-scale (mean, sd).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mu_theta: f64,
    pub sigma_theta: f64,
    pub mu_beta: f64,
    pub sigma_beta: f64,
    pub mu_tau: f64,
    pub sigma_tau: f64,
    pub error_prior: ErrorPrior,
    pub mu_alpha0: f64,
    pub sigma_alpha0: f64,
    pub mu_alpha1: f64,
    pub sigma_alpha1: f64,
    pub mu_gamma0: f64,
    pub sigma_gamma0: f64,
    pub mu_gamma1: f64,
    pub sigma_gamma1: f64,
}

impl Default for PriorConfig {
    /// The hyperparameters used for both simulation studies.
    fn default() -> Self {
        PriorConfig {
            mu_theta: -3.0,
            sigma_theta: 2.0,
            mu_beta: 0.0,
            sigma_beta: 1.0,
            mu_tau: 0.05,
            sigma_tau: 0.5,
            error_prior: ErrorPrior::TruncatedUniform,
            mu_alpha0: -1.5,
            sigma_alpha0: 1.0,
            mu_alpha1: -1.5,
            sigma_alpha1: 1.0,
            mu_gamma0: 0.0,
            sigma_gamma0: 0.5,
            mu_gamma1: 0.0,
            sigma_gamma1: 0.5,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("sigma_theta", self.sigma_theta),
            ("sigma_beta", self.sigma_beta),
            ("sigma_tau", self.sigma_tau),
            ("sigma_alpha0", self.sigma_alpha0),
            ("sigma_alpha1", self.sigma_alpha1),
            ("sigma_gamma0", self.sigma_gamma0),
            ("sigma_gamma1", self.sigma_gamma1),
        ];
        for (name, s) in sigmas {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {s}")));
            }
        }
        let mus = [
            self.mu_theta,
            self.mu_beta,
            self.mu_tau,
            self.mu_alpha0,
            self.mu_alpha1,
            self.mu_gamma0,
            self.mu_gamma1,
        ];
        if mus.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("prior means must be finite".into()));
        }
        Ok(())
    }
}

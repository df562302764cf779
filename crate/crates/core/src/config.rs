//! Flat key/value run configuration.
//!
//! Files are TOML without tables. A `preset` key (`study1` or `study2`, default
//! `study1`) supplies every value; the remaining keys override it. The effective
//! configuration echoes back as TOML that parses to the same values.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::model::{BaseParams, ErrorPrior, ExtParams, ModelKind, Params, PriorConfig};
use crate::sampler::{DiagnosticThresholds, SamplerConfig};
use crate::simulator::{CovariateSpec, DifficultySpec, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
    pub thresholds: DiagnosticThresholds,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    seed: Option<u64>,
    n_calls: Option<usize>,
    n_ratings: Option<u32>,
    truth_model: Option<ModelKind>,
    intercept: Option<f64>,
    betas: Option<Vec<f64>>,
    tau: Option<f64>,
    fpr: Option<f64>,
    fnr: Option<f64>,
    alpha0: Option<f64>,
    alpha1: Option<f64>,
    gamma0: Option<f64>,
    gamma1: Option<f64>,
    covariates: Option<Vec<CovariateSpec>>,
    covariate_names: Option<Vec<String>>,
    treatment_prob: Option<f64>,
    difficulty: Option<String>,

    mu_theta: Option<f64>,
    sigma_theta: Option<f64>,
    mu_beta: Option<f64>,
    sigma_beta: Option<f64>,
    mu_tau: Option<f64>,
    sigma_tau: Option<f64>,
    error_prior: Option<ErrorPrior>,
    mu_alpha0: Option<f64>,
    sigma_alpha0: Option<f64>,
    mu_alpha1: Option<f64>,
    sigma_alpha1: Option<f64>,
    mu_gamma0: Option<f64>,
    sigma_gamma0: Option<f64>,
    mu_gamma1: Option<f64>,
    sigma_gamma1: Option<f64>,

    chains: Option<usize>,
    warmup: Option<usize>,
    samples: Option<usize>,
    target_accept: Option<f64>,
    leapfrog_steps: Option<usize>,
    init_radius: Option<f64>,
    sampler_seed: Option<u64>,
    da_gamma: Option<f64>,
    da_t0: Option<f64>,
    da_kappa: Option<f64>,

    max_rhat: Option<f64>,
    min_ess: Option<f64>,
    max_divergence_fraction: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let sim = match name {
            "study1" => SimConfig::study1(1),
            "study2" => SimConfig::study2(1),
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?} (expected study1 or study2)"
                )))
            }
        };
        Ok(RunConfig {
            sim,
            priors: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            thresholds: DiagnosticThresholds::default(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut cfg = RunConfig::preset(raw.preset.as_deref().unwrap_or("study1"))?;
        let sim = &mut cfg.sim;
        set(&mut sim.seed, raw.seed);
        set(&mut sim.n_calls, raw.n_calls);
        set(&mut sim.n_ratings, raw.n_ratings);
        set(&mut sim.covariates, raw.covariates);
        set(&mut sim.covariate_names, raw.covariate_names);
        set(&mut sim.treatment_prob, raw.treatment_prob);
        if let Some(d) = raw.difficulty {
            sim.difficulty = match d.trim() {
                "none" => None,
                other => Some(DifficultySpec::try_from(other.to_string())?),
            };
        }
        if let Some(kind) = raw.truth_model {
            if kind != sim.truth.kind() {
                sim.truth = switch_kind(&sim.truth, kind);
                if kind == ModelKind::Extended && sim.difficulty.is_none() {
                    sim.difficulty = SimConfig::study2(0).difficulty;
                }
            }
        }
        match &mut sim.truth {
            Params::Base(p) => {
                set(&mut p.intercept, raw.intercept);
                set(&mut p.betas, raw.betas);
                set(&mut p.tau, raw.tau);
                set(&mut p.fpr, raw.fpr);
                set(&mut p.fnr, raw.fnr);
                if raw.alpha0.or(raw.alpha1).or(raw.gamma0).or(raw.gamma1).is_some() {
                    return Err(Error::Config(
                        "alpha/gamma keys need truth_model = \"extended\"".into(),
                    ));
                }
            }
            Params::Extended(p) => {
                set(&mut p.intercept, raw.intercept);
                set(&mut p.betas, raw.betas);
                set(&mut p.tau, raw.tau);
                set(&mut p.alpha0, raw.alpha0);
                set(&mut p.alpha1, raw.alpha1);
                set(&mut p.gamma0, raw.gamma0);
                set(&mut p.gamma1, raw.gamma1);
                if raw.fpr.or(raw.fnr).is_some() {
                    return Err(Error::Config("fpr/fnr keys need truth_model = \"base\"".into()));
                }
            }
        }

        let pr = &mut cfg.priors;
        set(&mut pr.mu_theta, raw.mu_theta);
        set(&mut pr.sigma_theta, raw.sigma_theta);
        set(&mut pr.mu_beta, raw.mu_beta);
        set(&mut pr.sigma_beta, raw.sigma_beta);
        set(&mut pr.mu_tau, raw.mu_tau);
        set(&mut pr.sigma_tau, raw.sigma_tau);
        set(&mut pr.error_prior, raw.error_prior);
        set(&mut pr.mu_alpha0, raw.mu_alpha0);
        set(&mut pr.sigma_alpha0, raw.sigma_alpha0);
        set(&mut pr.mu_alpha1, raw.mu_alpha1);
        set(&mut pr.sigma_alpha1, raw.sigma_alpha1);
        set(&mut pr.mu_gamma0, raw.mu_gamma0);
        set(&mut pr.sigma_gamma0, raw.sigma_gamma0);
        set(&mut pr.mu_gamma1, raw.mu_gamma1);
        set(&mut pr.sigma_gamma1, raw.sigma_gamma1);

        let s = &mut cfg.sampler;
        set(&mut s.n_chains, raw.chains);
        set(&mut s.n_warmup, raw.warmup);
        set(&mut s.n_samples, raw.samples);
        set(&mut s.target_accept, raw.target_accept);
        set(&mut s.leapfrog_steps, raw.leapfrog_steps);
        set(&mut s.init_radius, raw.init_radius);
        set(&mut s.seed, raw.sampler_seed);
        set(&mut s.dual_averaging.gamma, raw.da_gamma);
        set(&mut s.dual_averaging.t0, raw.da_t0);
        set(&mut s.dual_averaging.kappa, raw.da_kappa);

        let t = &mut cfg.thresholds;
        set(&mut t.max_rhat, raw.max_rhat);
        set(&mut t.min_ess, raw.min_ess);
        set(&mut t.max_divergence_fraction, raw.max_divergence_fraction);

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let sim = &self.sim;
        sim.validate()?;
        if sim.covariates.len() != sim.covariate_names.len() {
            return Err(Error::Config(format!(
                "{} covariate distributions but {} covariate names",
                sim.covariates.len(),
                sim.covariate_names.len()
            )));
        }
        if sim.truth.betas().len() != sim.covariates.len() {
            return Err(Error::Config(format!(
                "{} true slopes for {} covariates",
                sim.truth.betas().len(),
                sim.covariates.len()
            )));
        }
        if let Params::Base(p) = &sim.truth {
            if !(0.0..0.5).contains(&p.fpr) || !(0.0..0.5).contains(&p.fnr) {
                return Err(Error::Config("true error rates must lie in [0, 0.5)".into()));
            }
        }
        self.priors.validate()?;
        self.sampler.validate()?;
        Ok(())
    }

    /// The effective configuration as commented TOML.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let sim = &self.sim;
        let mut line = |key: &str, value: String, note: &str| {
            let _ = writeln!(out, "{key} = {value}  # {note}");
        };
        let list = |v: &[f64]| format!("[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
        let strs = |v: &[String]| format!("[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));

        line("seed", sim.seed.to_string(), "simulation seed");
        line("n_calls", sim.n_calls.to_string(), "calls");
        line("n_ratings", sim.n_ratings.to_string(), "rating rounds per call");
        line("truth_model", format!("{:?}", sim.truth.kind().as_str()), "base or extended");
        line("intercept", format!("{:?}", sim.truth.intercept()), "log-odds");
        line("betas", list(sim.truth.betas()), "log-odds per covariate unit");
        line("tau", format!("{:?}", sim.truth.tau()), "log-odds");
        match &sim.truth {
            Params::Base(p) => {
                line("fpr", format!("{:?}", p.fpr), "probability");
                line("fnr", format!("{:?}", p.fnr), "probability");
            }
            Params::Extended(p) => {
                line("alpha0", format!("{:?}", p.alpha0), "logit of twice the error rate");
                line("alpha1", format!("{:?}", p.alpha1), "logit of twice the error rate");
                line("gamma0", format!("{:?}", p.gamma0), "logit per difficulty unit");
                line("gamma1", format!("{:?}", p.gamma1), "logit per difficulty unit");
            }
        }
        let covs: Vec<String> = sim.covariates.iter().map(ToString::to_string).collect();
        line("covariates", strs(&covs), "normal or bernoulli(p)");
        line("covariate_names", strs(&sim.covariate_names), "column names");
        line("treatment_prob", format!("{:?}", sim.treatment_prob), "probability");
        let diff = sim.difficulty.map_or_else(|| "none".to_string(), String::from);
        line("difficulty", format!("{diff:?}"), "none or uniform(low,high)");

        let p = &self.priors;
        for (k, v, note) in [
            ("mu_theta", p.mu_theta, "log-odds"),
            ("sigma_theta", p.sigma_theta, "log-odds"),
            ("mu_beta", p.mu_beta, "log-odds"),
            ("sigma_beta", p.sigma_beta, "log-odds"),
            ("mu_tau", p.mu_tau, "log-odds"),
            ("sigma_tau", p.sigma_tau, "log-odds"),
            ("mu_alpha0", p.mu_alpha0, "logit scale"),
            ("sigma_alpha0", p.sigma_alpha0, "logit scale"),
            ("mu_alpha1", p.mu_alpha1, "logit scale"),
            ("sigma_alpha1", p.sigma_alpha1, "logit scale"),
            ("mu_gamma0", p.mu_gamma0, "log of slope"),
            ("sigma_gamma0", p.sigma_gamma0, "log of slope"),
            ("mu_gamma1", p.mu_gamma1, "log of slope"),
            ("sigma_gamma1", p.sigma_gamma1, "log of slope"),
        ] {
            line(k, format!("{v:?}"), note);
        }
        line("error_prior", "\"truncated-uniform\"".into(), "density 2 on (0, 0.5)");

        let s = &self.sampler;
        line("chains", s.n_chains.to_string(), "count");
        line("warmup", s.n_warmup.to_string(), "iterations per chain");
        line("samples", s.n_samples.to_string(), "iterations per chain");
        line("target_accept", format!("{:?}", s.target_accept), "probability");
        line("leapfrog_steps", s.leapfrog_steps.to_string(), "steps, jittered by half");
        line("init_radius", format!("{:?}", s.init_radius), "unconstrained units");
        line("sampler_seed", s.seed.to_string(), "sampler seed");
        line("da_gamma", format!("{:?}", s.dual_averaging.gamma), "dual averaging shrinkage");
        line("da_t0", format!("{:?}", s.dual_averaging.t0), "iterations");
        line("da_kappa", format!("{:?}", s.dual_averaging.kappa), "decay exponent");

        let t = &self.thresholds;
        line("max_rhat", format!("{:?}", t.max_rhat), "split R-hat bound");
        line("min_ess", format!("{:?}", t.min_ess), "draws");
        line("max_divergence_fraction", format!("{:?}", t.max_divergence_fraction), "fraction of draws");
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.echo().as_bytes())
    }
}

fn switch_kind(truth: &Params, kind: ModelKind) -> Params {
    let (intercept, betas, tau) = (truth.intercept(), truth.betas().to_vec(), truth.tau());
    match kind {
        ModelKind::Base => {
            let Params::Base(d) = SimConfig::study1(0).truth else { unreachable!() };
            Params::Base(BaseParams { intercept, betas, tau, ..d })
        }
        ModelKind::Extended => {
            let Params::Extended(d) = SimConfig::study2(0).truth else { unreachable!() };
            Params::Extended(ExtParams { intercept, betas, tau, ..d })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_study1() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.sim, SimConfig::study1(1));
        assert_eq!(c.priors, PriorConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse("preset = \"study2\"\nseed = 9\nn_calls = 20\ngamma1 = 2\nchains = 2\n").unwrap();
        assert_eq!(c.sim.seed, 9);
        assert_eq!(c.sim.n_calls, 20);
        let Params::Extended(p) = &c.sim.truth else { panic!() };
        assert_eq!(p.gamma1, 2.0);
        assert_eq!(c.sampler.n_chains, 2);
    }

    #[test]
    fn echo_round_trips() {
        for preset in ["study1", "study2"] {
            let mut c = RunConfig::preset(preset).unwrap();
            c.sim.treatment_prob = 0.3;
            c.priors.sigma_tau = 0.123_456_789;
            let again = RunConfig::parse(&c.echo()).unwrap();
            assert_eq!(again, c);
            assert_eq!(again.digest(), c.digest());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("unknown_key = 1").is_err());
        assert!(RunConfig::parse("preset = \"study3\"").is_err());
        assert!(RunConfig::parse("fpr = 0.7").is_err());
        assert!(RunConfig::parse("gamma0 = 1.0").is_err());
        assert!(RunConfig::parse("betas = [1.0]").is_err());
        assert!(RunConfig::parse("sigma_tau = 0").is_err());
    }
}

//! End-to-end workflows shared by the command line and the test suites:
//! simulate, fit, analyze saved draws, and compare methods against the truth.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    ate_draws, mean_error_rate_draws, param_summaries, pearson_corr, per_call_posterior,
    per_call_posterior_plugin, CovariateScale, FitReport, RecoveryMetrics, ReportManifest, Summary,
};
use crate::baselines::{majority_vote_baseline, MajorityVoteResult, TieBreak};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{dataset_digest, sha256_hex, TruthTable};
use crate::model::{LatentModel, ModelKind, Params, PriorConfig, RatingDataset};
use crate::report::SimManifest;
use crate::sampler::{sample, DiagnosticThresholds, Diagnostics, PosteriorDraws, SamplerConfig};
use crate::simulator::{simulate, truncate_ratings, SimTruth};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub kind: ModelKind,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
    pub thresholds: DiagnosticThresholds,
    /// Evaluate per-call probabilities at the posterior mean instead of per draw.
    pub plugin_posterior: bool,
    /// Add the difficulty score to the latent-state regression.
    pub difficulty_covariate: bool,
    /// Center and scale covariates before fitting.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            kind: ModelKind::Base,
            priors: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            thresholds: DiagnosticThresholds::default(),
            plugin_posterior: false,
            difficulty_covariate: false,
            standardize: false,
        }
    }
}

impl FitOptions {
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("options serialize").as_bytes())
    }
}

/// A completed fit with the per-draw series behind its summaries.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub report: FitReport,
    pub draws: PosteriorDraws,
    pub fpr_draws: Vec<f64>,
    pub fnr_draws: Vec<f64>,
    pub ate_draws: Option<Vec<f64>>,
}

/// Applies the optional difficulty covariate and standardization.
pub fn prepare(data: &RatingDataset, options: &FitOptions) -> Result<(RatingDataset, Option<Vec<CovariateScale>>)> {
    let mut data = if options.difficulty_covariate {
        data.with_difficulty_covariate()?
    } else {
        data.clone()
    };
    let mut scaling = None;
    if options.standardize {
        let (scaled, scales) = data.standardized()?;
        scaling = Some(
            scaled
                .covariate_names()
                .iter()
                .zip(scales)
                .map(|(name, (mean, sd))| CovariateScale {
                    name: name.clone(),
                    mean,
                    sd,
                })
                .collect(),
        );
        data = scaled;
    }
    Ok((data, scaling))
}

pub fn fit(data: &RatingDataset, options: &FitOptions) -> Result<FitOutput> {
    let (prepared, scaling) = prepare(data, options)?;
    let model = LatentModel::new(&prepared, &options.priors, options.kind)?;
    let draws = sample(&model, &options.sampler)?;
    summarize(draws, &prepared, options, scaling, dataset_digest(data))
}

/// Summarizes previously saved draws against the dataset they were fitted to.
pub fn analyze(draws: PosteriorDraws, data: &RatingDataset, options: &FitOptions) -> Result<FitOutput> {
    let (prepared, scaling) = prepare(data, options)?;
    summarize(draws, &prepared, options, scaling, dataset_digest(data))
}

fn summarize(
    draws: PosteriorDraws,
    data: &RatingDataset,
    options: &FitOptions,
    scaling: Option<Vec<CovariateScale>>,
    dataset_digest: String,
) -> Result<FitOutput> {
    let kind = options.kind;
    let mut notes = Vec::new();
    let diagnostics = Diagnostics::compute(&draws, options.thresholds);
    if !diagnostics.converged {
        notes.push("convergence thresholds not met; treat summaries with caution".into());
    }
    if diagnostics.divergence_warning {
        notes.push(format!(
            "{} divergent transitions ({:.1}% of draws)",
            diagnostics.divergences,
            100.0 * diagnostics.divergence_fraction
        ));
    }
    let (fpr_draws, fnr_draws) = mean_error_rate_draws(&draws, data, kind)?;
    if kind == ModelKind::Extended {
        notes.push("reported error rates are averages of the per-call rates over calls".into());
    }
    let ate = match ate_draws(&draws, data, kind) {
        Ok(v) => Some(v),
        Err(Error::UndefinedStatistic(msg)) => {
            notes.push(msg);
            None
        }
        Err(e) => return Err(e),
    };
    let per_call = if options.plugin_posterior {
        per_call_posterior_plugin(&draws, data, kind)?
    } else {
        per_call_posterior(&draws, data, kind)?
    };
    let report = FitReport {
        manifest: ReportManifest {
            software_version: VERSION.into(),
            model_kind: kind,
            seed: options.sampler.seed,
            config_digest: options.digest(),
            dataset_digest,
            plugin_posterior: options.plugin_posterior,
            difficulty_covariate: options.difficulty_covariate,
            covariate_scaling: scaling,
            priors: options.priors.clone(),
            sampler: options.sampler.clone(),
            notes,
        },
        n_calls: data.len(),
        param_summaries: param_summaries(&draws)?,
        mean_fpr: Summary::of(&fpr_draws)?,
        mean_fnr: Summary::of(&fnr_draws)?,
        ate_posterior: ate.as_deref().map(Summary::of).transpose()?,
        diagnostics: Some(diagnostics),
        recovery: None,
        per_call_posterior: per_call,
    };
    Ok(FitOutput {
        report,
        draws,
        fpr_draws,
        fnr_draws,
        ate_draws: ate,
    })
}

/// Adds correlation and AUC against known latent states (in dataset order).
pub fn attach_recovery(report: &mut FitReport, truth_states: &[u8]) -> Result<()> {
    report.recovery = Some(RecoveryMetrics::compute(&report.post_means(), truth_states)?);
    Ok(())
}

/// Simulates a dataset from the run configuration.
pub fn run_simulation(config: &RunConfig) -> Result<(RatingDataset, SimTruth, SimManifest)> {
    config.validate()?;
    let (data, truth) = simulate(&config.sim)?;
    let truth_values = true_values(&config.sim.truth, &truth);
    let mut notes = Vec::new();
    if matches!(config.sim.truth, Params::Extended(_)) {
        notes.push("latent-state coefficients for the heterogeneous-error study reuse the first study's values".into());
    }
    let manifest = SimManifest {
        software_version: VERSION.into(),
        seed: config.sim.seed,
        config_digest: config.digest(),
        dataset_digest: dataset_digest(&data),
        effective_config: config.echo(),
        truth: config.sim.truth.clone(),
        true_values: truth_values,
        notes,
    };
    Ok((data, truth, manifest))
}

/// Population-level true values of the compared quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueValues {
    pub fpr: f64,
    pub fnr: f64,
    pub tau: f64,
    pub eta: f64,
}

pub fn true_values(truth_params: &Params, truth: &SimTruth) -> TrueValues {
    let (fpr, fnr) = match (truth_params, &truth.per_call_error_rates) {
        (Params::Base(p), _) => (p.fpr, p.fnr),
        (Params::Extended(_), Some(rates)) => {
            let n = rates.len() as f64;
            (
                rates.iter().map(|r| r.0).sum::<f64>() / n,
                rates.iter().map(|r| r.1).sum::<f64>() / n,
            )
        }
        (Params::Extended(_), None) => (f64::NAN, f64::NAN),
    };
    TrueValues {
        fpr,
        fnr,
        tau: truth_params.tau(),
        eta: truth.true_ate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    Model(ModelKind),
    MajorityVote,
}

/// A comparison method: a model family or majority vote on the first `rounds` ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub kind: MethodKind,
    pub rounds: u32,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let prefix = match self.kind {
            MethodKind::Model(ModelKind::Base) => "base",
            MethodKind::Model(ModelKind::Extended) => "ext",
            MethodKind::MajorityVote => "mv",
        };
        write!(f, "{prefix}-{}", self.rounds)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad method {s:?} (expected base-N, ext-N or mv-N)"));
        let (prefix, n) = s.trim().rsplit_once('-').ok_or_else(bad)?;
        let kind = match prefix {
            "base" => MethodKind::Model(ModelKind::Base),
            "ext" | "extended" => MethodKind::Model(ModelKind::Extended),
            "mv" => MethodKind::MajorityVote,
            _ => return Err(bad()),
        };
        let rounds: u32 = n.parse().map_err(|_| bad())?;
        if rounds == 0 {
            return Err(bad());
        }
        Ok(Method { kind, rounds })
    }
}

/// Parses a comma-separated method list; an empty list is an error.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(Error::Config("no comparison methods given".into()));
    }
    Ok(methods)
}

/// The dataset restricted to its first `rounds` ratings per call.
pub fn with_rounds(data: &RatingDataset, rounds: u32) -> Result<RatingDataset> {
    if data.records().iter().all(|r| r.n_ratings == rounds) {
        return Ok(data.clone());
    }
    truncate_ratings(data, rounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub corr: f64,
    pub auc: Option<f64>,
    pub fpr: f64,
    pub fnr: f64,
    pub tau: f64,
    pub eta: Option<f64>,
    /// `None` for methods without MCMC.
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub software_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub dataset_digest: String,
    pub truth: Option<TrueValues>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub row: ComparisonRow,
    pub fit: Option<FitOutput>,
    pub majority: Option<MajorityVoteResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub fit: FitOptions,
    pub tie_break: TieBreak,
}

/// Runs every method on the same data and scores it against the true latent states.
pub fn compare(
    data: &RatingDataset,
    truth: &TruthTable,
    truth_values: Option<TrueValues>,
    methods: &[Method],
    options: &CompareOptions,
) -> Result<(ComparisonReport, Vec<MethodResult>)> {
    if methods.is_empty() {
        return Err(Error::Config("no comparison methods given".into()));
    }
    let states = truth.states_for(data)?;
    let states_f: Vec<f64> = states.iter().map(|&d| f64::from(d)).collect();
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let subset = with_rounds(data, method.rounds)?;
        let name = method.to_string();
        let result = match method.kind {
            MethodKind::Model(kind) => {
                let fit_options = FitOptions {
                    kind,
                    ..options.fit.clone()
                };
                let mut out = fit(&subset, &fit_options)?;
                attach_recovery(&mut out.report, &states)?;
                let r = &out.report;
                let recovery = r.recovery.expect("attached above");
                let row = ComparisonRow {
                    method: name,
                    corr: recovery.corr_with_truth,
                    auc: Some(recovery.auc),
                    fpr: r.mean_fpr.mean,
                    fnr: r.mean_fnr.mean,
                    tau: r.param("tau").expect("tau is always a parameter").mean,
                    eta: r.ate_posterior.map(|s| s.mean),
                    converged: r.diagnostics.as_ref().map(Diagnostics::passed),
                };
                MethodResult {
                    method,
                    row,
                    fit: Some(out),
                    majority: None,
                }
            }
            MethodKind::MajorityVote => {
                let mv = majority_vote_baseline(&subset, options.tie_break)?;
                let votes: Vec<f64> = mv.votes.iter().map(|&v| f64::from(v)).collect();
                let row = ComparisonRow {
                    method: name,
                    corr: pearson_corr(&votes, &states_f)?,
                    auc: None,
                    fpr: mv.est_fpr,
                    fnr: mv.est_fnr,
                    tau: mv.tau,
                    eta: Some(mv.est_ate),
                    converged: None,
                };
                MethodResult {
                    method,
                    row,
                    fit: None,
                    majority: Some(mv),
                }
            }
        };
        results.push(result);
    }
    let digest_input = serde_json::to_string(&(options, methods)).expect("options serialize");
    let report = ComparisonReport {
        software_version: VERSION.into(),
        seed: options.fit.sampler.seed,
        config_digest: sha256_hex(digest_input.as_bytes()),
        dataset_digest: dataset_digest(data),
        truth: truth_values,
        rows: results.iter().map(|r| r.row.clone()).collect(),
    };
    Ok((report, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_strings() {
        let m: Method = "ext-10".parse().unwrap();
        assert_eq!(m.kind, MethodKind::Model(ModelKind::Extended));
        assert_eq!(m.rounds, 10);
        assert_eq!(m.to_string(), "ext-10");
        assert_eq!("mv-5".parse::<Method>().unwrap().kind, MethodKind::MajorityVote);
        assert!("base-0".parse::<Method>().is_err());
        assert!("nope-3".parse::<Method>().is_err());
        assert!(parse_methods("").is_err());
        assert!(parse_methods(" , ").is_err());
        assert_eq!(parse_methods("base-5, mv-5").unwrap().len(), 2);
    }
}

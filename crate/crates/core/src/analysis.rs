//! Posterior summaries: parameter tables, per-call dissatisfaction probabilities,
//! the average treatment effect and latent-state recovery metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::math::inv_logit;
use crate::model::{call_error_rates, mixture_log_components, ModelKind, Params, RatingDataset};
use crate::model::{CallRecord, ParamLayout, PriorConfig};
use crate::sampler::{Diagnostics, PosteriorDraws, SamplerConfig};

/// Posterior probability that the call is truly dissatisfied, by Bayes' rule
/// on the two mixture components.
pub fn posterior_prob_dissatisfied(params: &Params, record: &CallRecord) -> Result<f64> {
    let (satisfied, dissatisfied) = mixture_log_components(params, record)?;
    if dissatisfied == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if satisfied == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    Ok(inv_logit(dissatisfied - satisfied))
}

/// Mean over calls of `σ(η | T=1) − σ(η | T=0)`.
pub fn g_computation_ate(intercept: f64, betas: &[f64], tau: f64, data: &RatingDataset) -> Result<f64> {
    if betas.len() != data.n_covariates() {
        return Err(Error::Config(format!(
            "{} slopes for {} covariates",
            betas.len(),
            data.n_covariates()
        )));
    }
    let total: f64 = data
        .records()
        .iter()
        .map(|r| {
            let base = intercept + betas.iter().zip(&r.covariates).map(|(b, x)| b * x).sum::<f64>();
            inv_logit(base + tau) - inv_logit(base)
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::UndefinedStatistic("summary of no values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Summary {
            mean,
            sd,
            q025: quantile_sorted(&sorted, 0.025),
            q50: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
}

pub fn param_summaries(draws: &PosteriorDraws) -> Result<Vec<ParamSummary>> {
    (0..draws.dim())
        .map(|j| {
            let values: Vec<f64> = draws.iter_draws().map(|d| d[j]).collect();
            Ok(ParamSummary {
                name: draws.param_names[j].clone(),
                summary: Summary::of(&values)?,
            })
        })
        .collect()
}

fn draw_params(draws: &PosteriorDraws, kind: ModelKind, data: &RatingDataset) -> Result<Vec<Params>> {
    let layout = ParamLayout::new(kind, data.n_covariates());
    if layout.dim() != draws.dim() {
        return Err(Error::Config(format!(
            "draws have {} parameters, the {} model on this dataset needs {}",
            draws.dim(),
            kind.as_str(),
            layout.dim()
        )));
    }
    draws.iter_draws().map(|d| Params::from_vec(kind, d)).collect()
}

/// Posterior mean and central 95% interval of `P(D_c = 1)` for one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallPosterior {
    pub call_id: String,
    pub post_mean: f64,
    pub post_lo95: f64,
    pub post_hi95: f64,
}

/// Evaluates the per-call posterior probability at every draw and summarizes.
pub fn per_call_posterior(draws: &PosteriorDraws, data: &RatingDataset, kind: ModelKind) -> Result<Vec<CallPosterior>> {
    let params = draw_params(draws, kind, data)?;
    let mut values = vec![0.0; params.len()];
    data.records()
        .iter()
        .map(|r| {
            for (v, p) in values.iter_mut().zip(&params) {
                *v = posterior_prob_dissatisfied(p, r)?;
            }
            let s = Summary::of(&values)?;
            Ok(CallPosterior {
                call_id: r.call_id.clone(),
                post_mean: s.mean,
                post_lo95: s.q025,
                post_hi95: s.q975,
            })
        })
        .collect()
}

/// Plug-in variant: evaluates at the posterior-mean parameters; the interval
/// collapses to the point value.
pub fn per_call_posterior_plugin(draws: &PosteriorDraws, data: &RatingDataset, kind: ModelKind) -> Result<Vec<CallPosterior>> {
    draw_params(draws, kind, data)?;
    let d = draws.dim();
    let mut means = vec![0.0; d];
    for row in draws.iter_draws() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = draws.total_draws() as f64;
    means.iter_mut().for_each(|m| *m /= n);
    let params = Params::from_vec(kind, &means)?;
    data.records()
        .iter()
        .map(|r| {
            let p = posterior_prob_dissatisfied(&params, r)?;
            Ok(CallPosterior {
                call_id: r.call_id.clone(),
                post_mean: p,
                post_lo95: p,
                post_hi95: p,
            })
        })
        .collect()
}

/// Per-draw g-computation ATE values.
pub fn ate_draws(draws: &PosteriorDraws, data: &RatingDataset, kind: ModelKind) -> Result<Vec<f64>> {
    if !data.treatment_varies() {
        return Err(Error::UndefinedStatistic(
            "treatment is constant in the data; the average treatment effect is not identified".into(),
        ));
    }
    draw_params(draws, kind, data)?
        .iter()
        .map(|p| g_computation_ate(p.intercept(), p.betas(), p.tau(), data))
        .collect()
}

pub fn ate_posterior(draws: &PosteriorDraws, data: &RatingDataset, kind: ModelKind) -> Result<Summary> {
    Summary::of(&ate_draws(draws, data, kind)?)
}

/// Per-draw averages over calls of the (false-positive, false-negative) rates.
pub fn mean_error_rate_draws(draws: &PosteriorDraws, data: &RatingDataset, kind: ModelKind) -> Result<(Vec<f64>, Vec<f64>)> {
    let params = draw_params(draws, kind, data)?;
    let n = data.len() as f64;
    let mut fpr = Vec::with_capacity(params.len());
    let mut fnr = Vec::with_capacity(params.len());
    for p in &params {
        let (mut a, mut b) = (0.0, 0.0);
        if let Params::Base(bp) = p {
            fpr.push(bp.fpr);
            fnr.push(bp.fnr);
            continue;
        }
        for r in data.records() {
            let (e0, e1) = call_error_rates(p, r)?;
            a += e0;
            b += e1;
        }
        fpr.push(a / n);
        fnr.push(b / n);
    }
    Ok((fpr, fnr))
}

/// Pearson correlation coefficient.
pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::UndefinedStatistic(
            "correlation needs two equal-length vectors of at least 2 values".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedStatistic("correlation of a constant vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Area under the ROC curve as the Mann–Whitney statistic; ties count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::UndefinedStatistic("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedStatistic("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub corr_with_truth: f64,
    pub auc: f64,
}

impl RecoveryMetrics {
    pub fn compute(post_means: &[f64], truth: &[u8]) -> Result<Self> {
        let t: Vec<f64> = truth.iter().map(|&d| d as f64).collect();
        Ok(RecoveryMetrics {
            corr_with_truth: pearson_corr(post_means, &t)?,
            auc: auc(post_means, truth)?,
        })
    }
}

/// Centering and scaling applied to one covariate before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Reproducibility record embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub software_version: String,
    pub model_kind: ModelKind,
    pub seed: u64,
    pub config_digest: String,
    pub dataset_digest: String,
    pub plugin_posterior: bool,
    pub difficulty_covariate: bool,
    pub covariate_scaling: Option<Vec<CovariateScale>>,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub manifest: ReportManifest,
    pub n_calls: usize,
    pub param_summaries: Vec<ParamSummary>,
    /// Average over calls of each error rate (equal to the global rate for the base model).
    pub mean_fpr: Summary,
    pub mean_fnr: Summary,
    pub ate_posterior: Option<Summary>,
    pub diagnostics: Option<Diagnostics>,
    pub recovery: Option<RecoveryMetrics>,
    pub per_call_posterior: Vec<CallPosterior>,
}

impl FitReport {
    pub fn param(&self, name: &str) -> Option<&Summary> {
        self.param_summaries
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.summary)
    }

    pub fn post_means(&self) -> Vec<f64> {
        self.per_call_posterior.iter().map(|c| c.post_mean).collect()
    }
}

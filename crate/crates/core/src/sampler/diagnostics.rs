//! Split-R̂ and rank-normalized bulk effective sample size.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::PosteriorDraws;
use crate::error::{Error, Result};

fn split_chains(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>> {
    if chains.is_empty() {
        return Err(Error::UndefinedDiagnostic("no chains".into()));
    }
    let n = chains[0].len();
    if n < 4 {
        return Err(Error::UndefinedDiagnostic(format!(
            "need at least 4 draws per chain, got {n}"
        )));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::UndefinedDiagnostic("chains have different lengths".into()));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::UndefinedDiagnostic("non-finite draw".into()));
    }
    let half = n / 2;
    // odd lengths drop the middle draw
    Ok(chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Within-chain variance W and the pooled estimate var⁺ over split chains.
fn variance_components(halves: &[&[f64]]) -> Result<(f64, f64, Vec<f64>)> {
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let within = halves
        .iter()
        .zip(&means)
        .map(|(c, &mu)| sample_var(c, mu))
        .sum::<f64>()
        / m;
    if !(within > 0.0) {
        return Err(Error::UndefinedDiagnostic("zero within-chain variance".into()));
    }
    let grand = mean(&means);
    let between_over_n = means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = (n - 1.0) / n * within + between_over_n;
    Ok((within, var_plus, means))
}

/// Potential scale reduction over split chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let halves = split_chains(chains)?;
    let (within, var_plus, _) = variance_components(&halves)?;
    Ok((var_plus / within).sqrt())
}

/// Effective sample size of rank-normalized split chains with Geyer's initial
/// monotone sequence truncation. Capped at `S·log10(S)` for `S` total draws.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64> {
    let halves = split_chains(chains)?;
    let normalized = rank_normalize(&halves);
    let refs: Vec<&[f64]> = normalized.iter().map(Vec::as_slice).collect();
    ess_of_split(&refs)
}

/// ESS of already-split chains without rank normalization.
pub fn ess_raw(chains: &[Vec<f64>]) -> Result<f64> {
    let halves = split_chains(chains)?;
    ess_of_split(&halves)
}

fn ess_of_split(halves: &[&[f64]]) -> Result<f64> {
    let (within, var_plus, means) = variance_components(halves)?;
    let m = halves.len();
    let n = halves[0].len();
    let total = (m * n) as f64;
    let autocov_mean = |lag: usize| -> f64 {
        halves
            .iter()
            .zip(&means)
            .map(|(c, &mu)| {
                c[..n - lag]
                    .iter()
                    .zip(&c[lag..])
                    .map(|(a, b)| (a - mu) * (b - mu))
                    .sum::<f64>()
                    / n as f64
            })
            .sum::<f64>()
            / m as f64
    };
    // within-chain variance uses the 1/n autocovariance convention for lag 0
    let w_biased = within * (n as f64 - 1.0) / n as f64;
    let rho = |lag: usize| 1.0 - (w_biased - autocov_mean(lag)) / var_plus;

    let mut pair_sums: Vec<f64> = Vec::new();
    let mut lag = 0;
    while lag + 1 < n {
        let p = if lag == 0 { 1.0 + rho(1) } else { rho(lag) + rho(lag + 1) };
        if p <= 0.0 {
            break;
        }
        let p = match pair_sums.last() {
            Some(&prev) => p.min(prev),
            None => p,
        };
        pair_sums.push(p);
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * pair_sums.iter().sum::<f64>()).max(1.0 / total.log10());
    Ok(total / tau)
}

fn rank_normalize(halves: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<(f64, usize)> = halves
        .iter()
        .flat_map(|c| c.iter().copied())
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let s = pooled.len();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // average rank for ties, 1-based
        let r = (i + j) as f64 / 2.0 + 1.0;
        for item in &pooled[i..=j] {
            ranks[item.1] = r;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let z: Vec<f64> = ranks
        .iter()
        .map(|&r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25)))
        .collect();
    let mut out = Vec::with_capacity(halves.len());
    let mut offset = 0;
    for c in halves {
        out.push(z[offset..offset + c.len()].to_vec());
        offset += c.len();
    }
    out
}

/// Convergence thresholds applied to every parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticThresholds {
    pub max_rhat: f64,
    pub min_ess: f64,
    pub max_divergence_fraction: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        DiagnosticThresholds {
            max_rhat: 1.01,
            min_ess: 400.0,
            max_divergence_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub param_names: Vec<String>,
    /// `None` where the diagnostic is undefined (e.g. a constant trace).
    pub split_rhat: Vec<Option<f64>>,
    pub ess_bulk: Vec<Option<f64>>,
    pub divergences: usize,
    pub divergence_fraction: f64,
    pub divergence_warning: bool,
    pub mean_accept_stat: f64,
    pub converged: bool,
    pub thresholds: DiagnosticThresholds,
}

impl Diagnostics {
    pub fn compute(draws: &PosteriorDraws, thresholds: DiagnosticThresholds) -> Self {
        let mut rhat = Vec::with_capacity(draws.dim());
        let mut ess = Vec::with_capacity(draws.dim());
        for j in 0..draws.dim() {
            let chains = draws.param_chains(j);
            rhat.push(split_rhat(&chains).ok());
            ess.push(ess_bulk(&chains).ok());
        }
        let converged = rhat.iter().all(|r| matches!(r, Some(v) if *v < thresholds.max_rhat))
            && ess.iter().all(|e| matches!(e, Some(v) if *v > thresholds.min_ess));
        let frac = draws.divergence_fraction();
        let accept = draws.mean_accept_stat.iter().sum::<f64>() / draws.n_chains as f64;
        Diagnostics {
            param_names: draws.param_names.clone(),
            split_rhat: rhat,
            ess_bulk: ess,
            divergences: draws.total_divergences(),
            divergence_fraction: frac,
            divergence_warning: frac > thresholds.max_divergence_fraction,
            mean_accept_stat: accept,
            converged,
            thresholds,
        }
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.split_rhat.iter().flatten().copied().reduce(f64::max)
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.ess_bulk.iter().flatten().copied().reduce(f64::min)
    }

    /// Convergence gate used for exit codes.
    pub fn passed(&self) -> bool {
        self.converged && !self.divergence_warning
    }
}

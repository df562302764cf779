//! Naive comparators: majority vote with a frequentist logistic regression on
//! the votes, and the latent model fitted to a single rating per call.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{g_computation_ate, FitReport};
use crate::error::{Error, Result};
use crate::model::math::{inv_logit, softplus};
use crate::model::{ModelKind, PriorConfig, RatingDataset};
use crate::pipeline::{fit, FitOptions};
use crate::sampler::SamplerConfig;
use crate::simulator::truncate_ratings;

/// How an exact half-split of the ratings is voted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    ToZero,
    ToOne,
}

/// 1 when more than half of the rounds are positive.
pub fn majority_vote(data: &RatingDataset, tie_break: TieBreak) -> Vec<u8> {
    data.records()
        .iter()
        .map(|r| {
            let (twice_k, n) = (2 * r.k_positive, r.n_ratings);
            if twice_k > n {
                1
            } else if twice_k < n {
                0
            } else {
                u8::from(tie_break == TieBreak::ToOne)
            }
        })
        .collect()
}

/// Error rates obtained by treating the votes as the true classes.
pub fn vote_error_rates(data: &RatingDataset, votes: &[u8]) -> Result<(f64, f64)> {
    if votes.len() != data.len() {
        return Err(Error::Input("one vote per call is required".into()));
    }
    let (mut fp, mut n0, mut fneg, mut n1) = (0u64, 0u64, 0u64, 0u64);
    for (r, &v) in data.records().iter().zip(votes) {
        if v == 0 {
            fp += r.k_positive as u64;
            n0 += r.n_ratings as u64;
        } else {
            fneg += (r.n_ratings - r.k_positive) as u64;
            n1 += r.n_ratings as u64;
        }
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::UndefinedStatistic(
            "every call received the same vote; one error rate is undefined".into(),
        ));
    }
    Ok((fp as f64 / n0 as f64, fneg as f64 / n1 as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Coefficients ran past the separation bound.
    pub separated: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted Newton step, starting at the origin.
    /// Non-decreasing up to rounding.
    pub log_likelihood_trace: Vec<f64>,
}

const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const SEPARATION_BOUND: f64 = 20.0;

pub fn logistic_log_likelihood(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| if yi == 1 { -softplus(-e) } else { -softplus(e) })
        .sum()
}

/// Maximum-likelihood logistic regression by Newton–Raphson with step halving.
pub fn logistic_fit(x: &DMatrix<f64>, y: &[u8]) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Input("design rows and labels differ in length".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Input("labels must be 0 or 1".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::Input("both label classes must be present".into()));
    }
    let gram = x.transpose() * x;
    let eig = gram.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if n < p || !(lo > hi * 1e-12) {
        return Err(Error::Input("design matrix is rank deficient".into()));
    }

    let yv = DVector::from_iterator(n, y.iter().map(|&v| v as f64));
    let mut beta = DVector::zeros(p);
    let mut ll = logistic_log_likelihood(x, y, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let mu = (x * &beta).map(inv_logit);
        let score = x.transpose() * (&yv - &mu);
        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        let w = mu.map(|m| m * (1.0 - m));
        let mut xw = x.clone();
        for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        let info = x.transpose() * xw;
        let step = match info.cholesky() {
            Some(ch) => ch.solve(&score),
            None => {
                separated = true;
                break;
            }
        };
        iterations += 1;
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = logistic_log_likelihood(x, y, &candidate);
        // Once the predicted gain is below the rounding level of the
        // log-likelihood the comparison is noise; take the Newton step as is.
        let in_noise = score.dot(&step) < 1e-12 * (1.0 + ll.abs());
        let mut halvings = 0;
        while !in_noise && !(cand_ll >= ll) && halvings < 30 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = logistic_log_likelihood(x, y, &candidate);
            halvings += 1;
        }
        if !in_noise && !(cand_ll >= ll) {
            break;
        }
        beta = candidate;
        ll = cand_ll;
        trace.push(ll);
        if beta.amax() > SEPARATION_BOUND {
            separated = true;
            break;
        }
    }
    // Under complete separation the score can vanish before the coefficients
    // pass the bound; a near-perfect fit gives it away.
    separated |= beta.amax() > SEPARATION_BOUND || ll > -1e-6;
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        converged: converged && !separated,
        separated,
        iterations,
        log_likelihood: ll,
        log_likelihood_trace: trace,
    })
}

/// Design matrix `[1, covariates.., treatment]`.
pub fn design_matrix(data: &RatingDataset) -> DMatrix<f64> {
    let p = data.n_covariates() + 2;
    DMatrix::from_fn(data.len(), p, |i, j| {
        let r = &data.records()[i];
        match j {
            0 => 1.0,
            j if j == p - 1 => f64::from(u8::from(r.treatment)),
            j => r.covariates[j - 1],
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityVoteResult {
    pub votes: Vec<u8>,
    pub est_fpr: f64,
    pub est_fnr: f64,
    pub intercept: f64,
    pub betas: Vec<f64>,
    pub tau: f64,
    pub est_ate: f64,
    pub logistic: LogisticFit,
}

/// Votes, vote-based error rates, a logistic regression of the votes on
/// covariates and treatment, and its g-computation ATE.
pub fn majority_vote_baseline(data: &RatingDataset, tie_break: TieBreak) -> Result<MajorityVoteResult> {
    let votes = majority_vote(data, tie_break);
    let (est_fpr, est_fnr) = vote_error_rates(data, &votes)?;
    let logistic = logistic_fit(&design_matrix(data), &votes)?;
    let c = &logistic.coefficients;
    let p = data.n_covariates();
    let (intercept, betas, tau) = (c[0], c[1..1 + p].to_vec(), c[1 + p]);
    let est_ate = g_computation_ate(intercept, &betas, tau, data)?;
    Ok(MajorityVoteResult {
        votes,
        est_fpr,
        est_fnr,
        intercept,
        betas,
        tau,
        est_ate,
        logistic,
    })
}

/// The base model fitted to the first rating of every call.
pub fn naive_single_rating_fit(
    data: &RatingDataset,
    priors: &PriorConfig,
    sampler: &SamplerConfig,
) -> Result<FitReport> {
    let single = if data.records().iter().all(|r| r.n_ratings == 1) {
        data.clone()
    } else {
        truncate_ratings(data, 1)?
    };
    let options = FitOptions {
        kind: ModelKind::Base,
        priors: priors.clone(),
        sampler: sampler.clone(),
        ..FitOptions::default()
    };
    Ok(fit(&single, &options)?.report)
}

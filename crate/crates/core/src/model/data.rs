use std::collections::HashSet;

use crate::error::{Error, Result};

/// Observed data for one call: `k_positive` dissatisfied ratings out of `n_ratings`.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub call_id: String,
    pub n_ratings: u32,
    pub k_positive: u32,
    pub covariates: Vec<f64>,
    pub treatment: bool,
    /// Mean of the per-round difficulty reports.
    pub difficulty: Option<f64>,
    /// Per-round ratings in round order, when they are known.
    pub rounds: Option<Vec<u8>>,
}

impl CallRecord {
    pub fn new(
        call_id: impl Into<String>,
        k_positive: u32,
        n_ratings: u32,
        covariates: Vec<f64>,
        treatment: bool,
    ) -> Self {
        CallRecord {
            call_id: call_id.into(),
            n_ratings,
            k_positive,
            covariates,
            treatment,
            difficulty: None,
            rounds: None,
        }
    }

    /// Builds a record from per-round ratings, keeping the rounds for truncation.
    pub fn from_rounds(
        call_id: impl Into<String>,
        rounds: Vec<u8>,
        covariates: Vec<f64>,
        treatment: bool,
    ) -> Self {
        let k = rounds.iter().map(|&r| r as u32).sum();
        CallRecord {
            call_id: call_id.into(),
            n_ratings: rounds.len() as u32,
            k_positive: k,
            covariates,
            treatment,
            difficulty: None,
            rounds: Some(rounds),
        }
    }

    pub fn with_difficulty(mut self, difficulty: f64) -> Self {
        self.difficulty = Some(difficulty);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_ratings == 0 {
            return Err(Error::Input(format!(
                "call {}: n_ratings must be at least 1",
                self.call_id
            )));
        }
        if self.k_positive > self.n_ratings {
            return Err(Error::Input(format!(
                "call {}: k = {} exceeds n = {}",
                self.call_id, self.k_positive, self.n_ratings
            )));
        }
        if let Some(rounds) = &self.rounds {
            let k: u32 = rounds.iter().map(|&r| r as u32).sum();
            if rounds.len() as u32 != self.n_ratings
                || k != self.k_positive
                || rounds.iter().any(|&r| r > 1)
            {
                return Err(Error::Input(format!(
                    "call {}: per-round ratings disagree with (k, n)",
                    self.call_id
                )));
            }
        }
        if self.covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input(format!(
                "call {}: non-finite covariate",
                self.call_id
            )));
        }
        if matches!(self.difficulty, Some(h) if !h.is_finite()) {
            return Err(Error::Input(format!(
                "call {}: non-finite difficulty",
                self.call_id
            )));
        }
        Ok(())
    }
}

/// A validated, non-empty collection of call records sharing one covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    records: Vec<CallRecord>,
    covariate_names: Vec<String>,
    has_difficulty: bool,
}

impl RatingDataset {
    pub fn new(records: Vec<CallRecord>, covariate_names: Vec<String>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Input("dataset has no calls".into()))?;
        let has_difficulty = first.difficulty.is_some();
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            if r.covariates.len() != covariate_names.len() {
                return Err(Error::Config(format!(
                    "call {}: {} covariates, expected {}",
                    r.call_id,
                    r.covariates.len(),
                    covariate_names.len()
                )));
            }
            if r.difficulty.is_some() != has_difficulty {
                return Err(Error::Config(format!(
                    "call {}: difficulty must be present for all calls or none",
                    r.call_id
                )));
            }
            if !seen.insert(r.call_id.as_str()) {
                return Err(Error::Input(format!("duplicate call_id {}", r.call_id)));
            }
        }
        Ok(RatingDataset {
            records,
            covariate_names,
            has_difficulty,
        })
    }

    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn has_difficulty(&self) -> bool {
        self.has_difficulty
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_rounds(&self) -> bool {
        self.records.iter().all(|r| r.rounds.is_some())
    }

    pub fn treatment_varies(&self) -> bool {
        let first = self.records[0].treatment;
        self.records.iter().any(|r| r.treatment != first)
    }

    /// Appends the difficulty score as an extra covariate of the latent-state regression.
    pub fn with_difficulty_covariate(&self) -> Result<Self> {
        if !self.has_difficulty {
            return Err(Error::Config(
                "dataset has no difficulty column to use as a covariate".into(),
            ));
        }
        let mut names = self.covariate_names.clone();
        names.push("difficulty".into());
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.covariates.push(r.difficulty.unwrap_or_default());
                r
            })
            .collect();
        RatingDataset::new(records, names)
    }

    /// Centers and scales every covariate column; returns the (mean, sd) used per column.
    /// Constant columns are centered only.
    pub fn standardized(&self) -> Result<(Self, Vec<(f64, f64)>)> {
        let n = self.records.len() as f64;
        let p = self.n_covariates();
        let mut scales = Vec::with_capacity(p);
        for j in 0..p {
            let mean = self.records.iter().map(|r| r.covariates[j]).sum::<f64>() / n;
            let var = self
                .records
                .iter()
                .map(|r| (r.covariates[j] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            scales.push((mean, sd));
        }
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for (x, &(m, s)) in r.covariates.iter_mut().zip(&scales) {
                    *x = (*x - m) / s;
                }
                r
            })
            .collect();
        Ok((RatingDataset::new(records, self.covariate_names.clone())?, scales))
    }
}

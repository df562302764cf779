//! Seeded data-generating processes for parameter-recovery studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::g_computation_ate;
use crate::error::{Error, Result};
use crate::model::{error_rates, theta_c, BaseParams, CallRecord, ExtParams, Params, RatingDataset};

/// Distribution of one simulated covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CovariateSpec {
    StandardNormal,
    Bernoulli(f64),
}

impl TryFrom<String> for CovariateSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CovariateSpec> for String {
    fn from(c: CovariateSpec) -> String {
        c.to_string()
    }
}

impl std::fmt::Display for CovariateSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovariateSpec::StandardNormal => write!(f, "normal"),
            CovariateSpec::Bernoulli(p) => write!(f, "bernoulli({p})"),
        }
    }
}

impl std::str::FromStr for CovariateSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "normal" {
            return Ok(CovariateSpec::StandardNormal);
        }
        if let Some(inner) = s.strip_prefix("bernoulli(").and_then(|r| r.strip_suffix(')')) {
            let p: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad bernoulli probability in {s:?}")))?;
            return Ok(CovariateSpec::Bernoulli(p));
        }
        Err(Error::Config(format!(
            "unknown covariate distribution {s:?} (expected \"normal\" or \"bernoulli(p)\")"
        )))
    }
}

/// Distribution of the observed difficulty score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DifficultySpec {
    Uniform { low: f64, high: f64 },
}

impl TryFrom<String> for DifficultySpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        let t = s.trim();
        let inner = t
            .strip_prefix("uniform(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Config(format!("unknown difficulty distribution {t:?}")))?;
        let parts: Vec<&str> = inner.split(',').collect();
        let parse = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad bound in {t:?}")))
        };
        match parts.as_slice() {
            [lo, hi] => Ok(DifficultySpec::Uniform {
                low: parse(lo)?,
                high: parse(hi)?,
            }),
            _ => Err(Error::Config(format!("expected uniform(low,high), got {t:?}"))),
        }
    }
}

impl From<DifficultySpec> for String {
    fn from(d: DifficultySpec) -> String {
        match d {
            DifficultySpec::Uniform { low, high } => format!("uniform({low},{high})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_calls: usize,
    pub n_ratings: u32,
    pub truth: Params,
    pub covariates: Vec<CovariateSpec>,
    pub covariate_names: Vec<String>,
    pub treatment_prob: f64,
    pub difficulty: Option<DifficultySpec>,
    pub seed: u64,
}

impl SimConfig {
    /// One thousand calls, five ratings each, homogeneous error rates.
    pub fn study1(seed: u64) -> Self {
        SimConfig {
            n_calls: 1000,
            n_ratings: 5,
            truth: Params::Base(BaseParams {
                intercept: -1.5,
                betas: vec![0.75, -0.5],
                tau: -0.8,
                fpr: 0.15,
                fnr: 0.10,
            }),
            covariates: vec![CovariateSpec::StandardNormal, CovariateSpec::Bernoulli(0.4)],
            covariate_names: vec!["x1".into(), "x2".into()],
            treatment_prob: 0.5,
            difficulty: None,
            seed,
        }
    }

    /// Fifteen hundred calls, ten ratings each, error rates rising with a
    /// uniform difficulty score. The latent-state regression reuses the
    /// first study's coefficients.
    pub fn study2(seed: u64) -> Self {
        SimConfig {
            n_calls: 1500,
            n_ratings: 10,
            truth: Params::Extended(ExtParams {
                intercept: -1.5,
                betas: vec![0.75, -0.5],
                tau: -0.8,
                alpha0: -1.5,
                alpha1: -1.5,
                gamma0: 3.5,
                gamma1: 4.0,
            }),
            difficulty: Some(DifficultySpec::Uniform { low: 0.0, high: 1.0 }),
            ..SimConfig::study1(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_calls == 0 || self.n_ratings == 0 {
            return Err(Error::Config("n_calls and n_ratings must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.treatment_prob) {
            return Err(Error::Config("treatment_prob must lie in [0, 1]".into()));
        }
        if self.covariates.len() != self.truth.betas().len() {
            return Err(Error::Config(format!(
                "{} covariate distributions but {} slopes",
                self.covariates.len(),
                self.truth.betas().len()
            )));
        }
        if self.covariate_names.len() != self.covariates.len() {
            return Err(Error::Config("one name per covariate is required".into()));
        }
        for c in &self.covariates {
            if let CovariateSpec::Bernoulli(p) = c {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Config(format!("bernoulli probability {p} outside [0, 1]")));
                }
            }
        }
        if let Some(DifficultySpec::Uniform { low, high }) = self.difficulty {
            if !(low.is_finite() && high.is_finite() && low <= high) {
                return Err(Error::Config("difficulty bounds must satisfy low <= high".into()));
            }
        }
        match &self.truth {
            Params::Base(p) => {
                if !((0.0..0.5).contains(&p.fpr) && (0.0..0.5).contains(&p.fnr)) {
                    return Err(Error::Config("true error rates must lie in [0, 0.5)".into()));
                }
            }
            Params::Extended(p) => {
                if self.difficulty.is_none() {
                    return Err(Error::Config(
                        "heterogeneous error rates need a difficulty distribution".into(),
                    ));
                }
                if !(p.gamma0 >= 0.0 && p.gamma1 >= 0.0) {
                    return Err(Error::Config("difficulty slopes must be non-negative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Hidden ground truth for a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub call_ids: Vec<String>,
    pub latent_states: Vec<u8>,
    pub theta_values: Vec<f64>,
    pub per_call_error_rates: Option<Vec<(f64, f64)>>,
    pub true_ate: f64,
}

/// Draws covariates, treatment, difficulty, latent states and per-round ratings.
pub fn simulate(config: &SimConfig) -> Result<(RatingDataset, SimTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_calls;
    let width = (n.max(1) as f64).log10().floor() as usize + 1;
    let mut records = Vec::with_capacity(n);
    let mut truth = SimTruth {
        call_ids: Vec::with_capacity(n),
        latent_states: Vec::with_capacity(n),
        theta_values: Vec::with_capacity(n),
        per_call_error_rates: matches!(config.truth, Params::Extended(_)).then(Vec::new),
        true_ate: 0.0,
    };
    for c in 0..n {
        let covariates: Vec<f64> = config
            .covariates
            .iter()
            .map(|spec| match *spec {
                CovariateSpec::StandardNormal => rng.sample(StandardNormal),
                CovariateSpec::Bernoulli(p) => f64::from(u8::from(rng.random::<f64>() < p)),
            })
            .collect();
        let treatment = rng.random::<f64>() < config.treatment_prob;
        let difficulty = config.difficulty.map(|DifficultySpec::Uniform { low, high }| {
            low + (high - low) * rng.random::<f64>()
        });
        let id = format!("c{:0width$}", c + 1);
        let mut record = CallRecord::new(id.clone(), 0, config.n_ratings, covariates, treatment);
        record.difficulty = difficulty;

        let theta = theta_c(&config.truth, &record)?;
        let state = rng.random::<f64>() < theta;
        let (fpr, fnr) = match &config.truth {
            Params::Base(p) => (p.fpr, p.fnr),
            Params::Extended(p) => {
                let h = difficulty.expect("validated");
                let rates = error_rates(p.alpha0, p.gamma0, p.alpha1, p.gamma1, h)?;
                if let Some(v) = truth.per_call_error_rates.as_mut() {
                    v.push(rates);
                }
                rates
            }
        };
        let p_positive = if state { 1.0 - fnr } else { fpr };
        let rounds: Vec<u8> = (0..config.n_ratings)
            .map(|_| u8::from(rng.random::<f64>() < p_positive))
            .collect();
        record.k_positive = rounds.iter().map(|&r| r as u32).sum();
        record.rounds = Some(rounds);

        truth.call_ids.push(id);
        truth.latent_states.push(u8::from(state));
        truth.theta_values.push(theta);
        records.push(record);
    }
    let data = RatingDataset::new(records, config.covariate_names.clone())?;
    truth.true_ate = true_ate(&config.truth, &data)?;
    Ok((data, truth))
}

/// Finite-population average treatment effect at the true parameters.
pub fn true_ate(truth: &Params, data: &RatingDataset) -> Result<f64> {
    g_computation_ate(truth.intercept(), truth.betas(), truth.tau(), data)
}

/// Keeps the first `n_keep` rounds of every call.
pub fn truncate_ratings(data: &RatingDataset, n_keep: u32) -> Result<RatingDataset> {
    if n_keep == 0 {
        return Err(Error::Input("must keep at least one round".into()));
    }
    let records = data
        .records()
        .iter()
        .map(|r| {
            let rounds = r.rounds.as_ref().ok_or_else(|| {
                Error::Input(format!("call {} has no per-round ratings to truncate", r.call_id))
            })?;
            if n_keep as usize > rounds.len() {
                return Err(Error::Input(format!(
                    "call {} has {} rounds, cannot keep {n_keep}",
                    r.call_id,
                    rounds.len()
                )));
            }
            let kept = rounds[..n_keep as usize].to_vec();
            let mut out = CallRecord::from_rounds(r.call_id.clone(), kept, r.covariates.clone(), r.treatment);
            out.difficulty = r.difficulty;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    RatingDataset::new(records, data.covariate_names().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            n_calls: 50,
            ..SimConfig::study1(seed)
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate(&small(3)).unwrap();
        let b = simulate(&small(3)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&small(4)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn noiseless_rater_reports_truth() {
        let mut cfg = small(9);
        cfg.truth = Params::Base(BaseParams {
            intercept: 0.0,
            betas: vec![0.75, -0.5],
            tau: -0.8,
            fpr: 0.0,
            fnr: 0.0,
        });
        let (data, truth) = simulate(&cfg).unwrap();
        for (r, &d) in data.records().iter().zip(&truth.latent_states) {
            assert_eq!(r.k_positive, r.n_ratings * d as u32);
        }
    }

    #[test]
    fn zero_tau_gives_zero_ate() {
        let mut cfg = small(1);
        if let Params::Base(p) = &mut cfg.truth {
            p.tau = 0.0;
        }
        let (_, truth) = simulate(&cfg).unwrap();
        assert_eq!(truth.true_ate, 0.0);
    }

    #[test]
    fn truncation_examples() {
        let r = CallRecord::from_rounds("a", vec![1, 0, 1, 1, 0], vec![], false);
        let d = RatingDataset::new(vec![r], vec![]).unwrap();
        assert_eq!(truncate_ratings(&d, 5).unwrap(), d);
        let one = truncate_ratings(&d, 1).unwrap();
        assert_eq!((one.records()[0].k_positive, one.records()[0].n_ratings), (1, 1));
        let three = truncate_ratings(&d, 3).unwrap();
        assert_eq!((three.records()[0].k_positive, three.records()[0].n_ratings), (2, 3));
        assert!(truncate_ratings(&d, 6).is_err());
        assert!(truncate_ratings(&d, 0).is_err());
    }

    #[test]
    fn truncation_requires_rounds() {
        let d = RatingDataset::new(vec![CallRecord::new("a", 2, 5, vec![], false)], vec![]).unwrap();
        assert!(matches!(truncate_ratings(&d, 1), Err(Error::Input(_))));
    }

    #[test]
    fn extended_truth_needs_difficulty() {
        let mut cfg = SimConfig::study2(1);
        cfg.difficulty = None;
        assert!(matches!(simulate(&cfg), Err(Error::Config(_))));
        let mut cfg = SimConfig::study1(1);
        cfg.covariates.pop();
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn covariate_spec_parsing() {
        assert_eq!("normal".parse::<CovariateSpec>().unwrap(), CovariateSpec::StandardNormal);
        assert_eq!(
            "bernoulli(0.4)".parse::<CovariateSpec>().unwrap(),
            CovariateSpec::Bernoulli(0.4)
        );
        assert!("gamma(2)".parse::<CovariateSpec>().is_err());
        assert_eq!(
            DifficultySpec::try_from("uniform(0,1)".to_string()).unwrap(),
            DifficultySpec::Uniform { low: 0.0, high: 1.0 }
        );
    }
}

//! Gradient-based MCMC: multi-chain HMC with step-size and diagonal-metric
//! warmup adaptation, plus split-R̂ and bulk-ESS diagnostics.
//!
//! Warmup schedule for `W` iterations:
//! * `[0, W/2)`: dual averaging with a unit metric;
//! * `[W/2, 4W/5)`: dual averaging continues, positions feed a running variance;
//! * at `4W/5` the diagonal metric is set from that variance and dual averaging restarts;
//! * `[4W/5, W)`: step size re-tuned for the new metric.
//!
//! Each chain owns a ChaCha stream selected by its index from the master seed,
//! so results do not depend on how chains are scheduled.

mod adapt;
pub mod diagnostics;
pub mod hmc;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adapt::{DualAverage, DualAverageSettings, RunningVariance};
pub use diagnostics::{ess_bulk, split_rhat, DiagnosticThresholds, Diagnostics};
use hmc::State;

use crate::error::{Error, Result};

/// A log density on ℝ^d with its gradient.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Maps a sampler-space point to reported parameters.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub target_accept: f64,
    /// Nominal leapfrog steps per iteration, jittered uniformly by ±50%.
    pub leapfrog_steps: usize,
    pub seed: u64,
    pub init_radius: f64,
    pub dual_averaging: DualAverageSettings,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            target_accept: 0.8,
            leapfrog_steps: 32,
            seed: 1,
            init_radius: 2.0,
            dual_averaging: DualAverageSettings::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_samples == 0 || self.leapfrog_steps == 0 {
            return Err(Error::Config(
                "n_chains, n_samples and leapfrog_steps must be positive".into(),
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if !(self.init_radius > 0.0 && self.init_radius.is_finite()) {
            return Err(Error::Config("init_radius must be positive".into()));
        }
        Ok(())
    }
}

const MAX_INIT_ATTEMPTS: usize = 100;

/// Post-warmup draws of every chain, in both parameter spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub n_chains: usize,
    pub n_samples: usize,
    pub param_names: Vec<String>,
    /// `[chain][iteration][parameter]`, flattened.
    pub draws: Vec<f64>,
    pub unconstrained_draws: Vec<f64>,
    pub accept_rate: Vec<f64>,
    pub mean_accept_stat: Vec<f64>,
    pub divergence_count: Vec<usize>,
    pub step_size: Vec<f64>,
    pub inv_metric: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    /// Builds draws from constrained values only (e.g. read back from a dump).
    pub fn from_constrained(param_names: Vec<String>, per_chain: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_chains = per_chain.len();
        let n_samples = per_chain.first().map_or(0, Vec::len);
        let d = param_names.len();
        if n_chains == 0 || n_samples == 0 {
            return Err(Error::Input("no draws".into()));
        }
        let mut draws = Vec::with_capacity(n_chains * n_samples * d);
        for chain in &per_chain {
            if chain.len() != n_samples {
                return Err(Error::Input("chains have different lengths".into()));
            }
            for row in chain {
                if row.len() != d {
                    return Err(Error::Input("draw width does not match parameter names".into()));
                }
                draws.extend_from_slice(row);
            }
        }
        Ok(PosteriorDraws {
            n_chains,
            n_samples,
            param_names,
            unconstrained_draws: Vec::new(),
            draws,
            accept_rate: vec![f64::NAN; n_chains],
            mean_accept_stat: vec![f64::NAN; n_chains],
            divergence_count: vec![0; n_chains],
            step_size: vec![f64::NAN; n_chains],
            inv_metric: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.n_samples
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let d = self.dim();
        let start = (chain * self.n_samples + iter) * d;
        &self.draws[start..start + d]
    }

    /// Every draw in chain-major order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.dim())
    }

    /// Per-chain traces of one constrained parameter.
    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_samples).map(|i| self.draw(c, i)[param]).collect())
            .collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn total_divergences(&self) -> usize {
        self.divergence_count.iter().sum()
    }

    pub fn divergence_fraction(&self) -> f64 {
        self.total_divergences() as f64 / self.total_draws() as f64
    }

    /// Raw draw dump: `chain,iter,<param>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.param_names.iter().cloned());
        w.write_record(&header)?;
        for c in 0..self.n_chains {
            for i in 0..self.n_samples {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(self.draw(c, i).iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("draws", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "chain" || &header[1] != "iter" {
            return Err(Error::Ingest {
                row: 1,
                message: "draw dump must start with columns chain,iter".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| Error::Ingest {
                    row,
                    message: format!("cannot parse {s:?} as a number"),
                })
            };
            let chain: usize = rec[0].trim().parse().map_err(|_| Error::Ingest {
                row,
                message: "bad chain index".into(),
            })?;
            let values = rec.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?;
            if chain >= chains.len() {
                chains.resize(chain + 1, Vec::new());
            }
            chains[chain].push(values);
        }
        PosteriorDraws::from_constrained(names, chains)
    }
}

struct ChainOutput {
    constrained: Vec<f64>,
    unconstrained: Vec<f64>,
    accepted: usize,
    accept_stat_sum: f64,
    divergences: usize,
    step: f64,
    inv_metric: Vec<f64>,
}

/// Runs `config.n_chains` independent chains against `density`.
pub fn sample<D: LogDensity>(density: &D, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let d = density.dim();
    if d == 0 {
        return Err(Error::Config("target has dimension 0".into()));
    }
    let outputs: Vec<Result<ChainOutput>> = if config.n_chains == 1 {
        vec![run_chain(density, config, 0)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..config.n_chains)
                .map(|c| scope.spawn(move || run_chain(density, config, c)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sampler chain panicked"))
                .collect()
        })
    };
    let mut draws = PosteriorDraws {
        n_chains: config.n_chains,
        n_samples: config.n_samples,
        param_names: density.param_names(),
        draws: Vec::with_capacity(config.n_chains * config.n_samples * d),
        unconstrained_draws: Vec::with_capacity(config.n_chains * config.n_samples * d),
        accept_rate: Vec::new(),
        mean_accept_stat: Vec::new(),
        divergence_count: Vec::new(),
        step_size: Vec::new(),
        inv_metric: Vec::new(),
    };
    for out in outputs {
        let out = out?;
        let n = config.n_samples as f64;
        draws.draws.extend(out.constrained);
        draws.unconstrained_draws.extend(out.unconstrained);
        draws.accept_rate.push(out.accepted as f64 / n);
        draws.mean_accept_stat.push(out.accept_stat_sum / n);
        draws.divergence_count.push(out.divergences);
        draws.step_size.push(out.step);
        draws.inv_metric.push(out.inv_metric);
    }
    Ok(draws)
}

/// The RNG for one chain: the master seed picks the key, the chain index the stream.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initialize<D: LogDensity>(density: &D, rng: &mut ChaCha8Rng, radius: f64, chain: usize) -> Result<State> {
    let d = density.dim();
    for _ in 0..MAX_INIT_ATTEMPTS {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..=radius)).collect();
        let state = State::new(density, x);
        if state.is_finite() {
            return Ok(state);
        }
    }
    Err(Error::Initialization {
        chain,
        attempts: MAX_INIT_ATTEMPTS,
    })
}

fn run_chain<D: LogDensity>(density: &D, config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let d = density.dim();
    let mut rng = chain_rng(config.seed, chain);
    let mut current = initialize(density, &mut rng, config.init_radius, chain)?;
    let mut scratch = current.clone();
    let mut momentum = vec![0.0; d];
    let mut inv_metric = vec![1.0; d];

    let warmup = config.n_warmup;
    let metric_start = warmup / 2;
    let metric_end = warmup * 4 / 5;
    let mut step = hmc::initial_step_size(density, &mut rng, &current, &inv_metric);
    let mut dual = DualAverage::new(config.dual_averaging, config.target_accept, step);
    let mut variance = RunningVariance::new(d);

    for it in 0..warmup {
        let n_steps = hmc::jittered_steps(&mut rng, config.leapfrog_steps);
        let tr = hmc::transition(
            density,
            &mut rng,
            &mut current,
            &mut scratch,
            &mut momentum,
            step,
            &inv_metric,
            n_steps,
        );
        dual.update(tr.accept_stat);
        step = dual.current();
        if it >= metric_start && it < metric_end {
            variance.push(&current.position);
        }
        if it + 1 == metric_end && variance.count() >= 10 {
            inv_metric = variance.regularized_variance();
            step = hmc::initial_step_size(density, &mut rng, &current, &inv_metric);
            dual = DualAverage::new(config.dual_averaging, config.target_accept, step);
        }
    }
    if warmup > 0 {
        step = dual.adapted();
    }

    let n = config.n_samples;
    let mut out = ChainOutput {
        constrained: Vec::with_capacity(n * d),
        unconstrained: Vec::with_capacity(n * d),
        accepted: 0,
        accept_stat_sum: 0.0,
        divergences: 0,
        step,
        inv_metric: inv_metric.clone(),
    };
    for _ in 0..n {
        let n_steps = hmc::jittered_steps(&mut rng, config.leapfrog_steps);
        let tr = hmc::transition(
            density,
            &mut rng,
            &mut current,
            &mut scratch,
            &mut momentum,
            step,
            &inv_metric,
            n_steps,
        );
        out.accepted += tr.accepted as usize;
        out.accept_stat_sum += tr.accept_stat;
        out.divergences += tr.divergent as usize;
        out.unconstrained.extend_from_slice(&current.position);
        out.constrained.extend(density.constrain(&current.position));
    }
    Ok(out)
}

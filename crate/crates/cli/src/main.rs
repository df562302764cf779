//! `latentrate` command line: simulate, fit, analyze and compare.
//!
//! Exit codes: 0 success, 1 runtime or input failure, 2 usage or configuration
//! error, 3 convergence diagnostics failed (suppressed by `--allow-nonconverged`).

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use latentrate::baselines::TieBreak;
use latentrate::config::RunConfig;
use latentrate::io::{self, CsvFormat, TruthTable};
use latentrate::pipeline::{self, CompareOptions, FitOptions, FitOutput, TrueValues};
use latentrate::report::{self, DiagnosticsSummary, RunManifest, Series, SimManifest};
use latentrate::sampler::DiagnosticThresholds;
use latentrate::{Error, ModelKind, PosteriorDraws, PriorConfig, RatingDataset, SamplerConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "latentrate", version, about = "Latent-state inference from repeated noisy binary ratings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a ratings dataset with its hidden truth
    Simulate(SimulateArgs),
    /// Fit the latent model to a ratings file
    Fit(FitArgs),
    /// Summarize previously dumped draws
    Analyze(AnalyzeArgs),
    /// Fit several methods and score them against the truth
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Long,
    Wide,
}

impl From<FormatArg> for CsvFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Long => CsvFormat::Long,
            FormatArg::Wide => CsvFormat::Wide,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Base,
    Extended,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Base => ModelKind::Base,
            ModelArg::Extended => ModelKind::Extended,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Zero,
    One,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat TOML configuration; keys override the chosen preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// study1 or study2 (ignored when the config sets its own preset)
    #[arg(long, default_value = "study1")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "long")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SamplerArgs {
    /// Flat TOML file supplying priors, sampler settings and thresholds
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

impl SamplerArgs {
    fn resolve(&self) -> Result<(PriorConfig, SamplerConfig, DiagnosticThresholds)> {
        let (priors, mut sampler, thresholds) = match &self.config {
            Some(path) => {
                let cfg = RunConfig::from_file(path)?;
                print!("{}", cfg.echo());
                (cfg.priors, cfg.sampler, cfg.thresholds)
            }
            None => Default::default(),
        };
        if let Some(v) = self.seed {
            sampler.seed = v;
        }
        if let Some(v) = self.chains {
            sampler.n_chains = v;
        }
        if let Some(v) = self.warmup {
            sampler.n_warmup = v;
        }
        if let Some(v) = self.samples {
            sampler.n_samples = v;
        }
        sampler.validate()?;
        Ok((priors, sampler, thresholds))
    }
}

#[derive(Args)]
struct FitFlags {
    #[arg(long, value_enum, default_value = "base")]
    model: ModelArg,
    /// Use only the first N ratings of every call
    #[arg(long)]
    rounds_keep: Option<u32>,
    /// Evaluate per-call probabilities at the posterior mean
    #[arg(long)]
    plugin_posterior: bool,
    /// Add difficulty to the latent-state regression
    #[arg(long)]
    difficulty_covariate: bool,
    /// Center and scale covariates before fitting
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct DataArgs {
    /// Ratings CSV in long or wide format
    #[arg(long)]
    data: PathBuf,
    /// Force the input format instead of detecting it from the header
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Truth CSV; adds recovery metrics
    #[arg(long)]
    truth: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<RatingDataset> {
        io::read_ratings_file(&self.data, self.format.map(Into::into))
            .with_context(|| format!("reading {}", self.data.display()))
    }

    fn load_truth(&self) -> Result<Option<TruthTable>> {
        self.truth
            .as_deref()
            .map(|p| io::read_truth_file(p).with_context(|| format!("reading {}", p.display())))
            .transpose()
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    flags: FitFlags,
    /// Write every post-warmup draw to draws.csv
    #[arg(long)]
    dump_draws: bool,
    /// Exit 0 even when convergence diagnostics fail
    #[arg(long)]
    allow_nonconverged: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Draw dump written by `fit --dump-draws`
    #[arg(long)]
    draws: PathBuf,
    #[command(flatten)]
    flags: FitFlags,
    #[arg(long)]
    allow_nonconverged: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    truth: PathBuf,
    /// simulation.json from `simulate`; adds the true values to the table
    #[arg(long)]
    sim_manifest: Option<PathBuf>,
    /// Comma-separated list such as ext-10,base-10,mv-10
    #[arg(long)]
    methods: String,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, value_enum, default_value = "zero")]
    tie_break: TieBreakArg,
    #[arg(long)]
    plugin_posterior: bool,
    #[arg(long)]
    difficulty_covariate: bool,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    allow_nonconverged: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Whether the command's convergence checks passed.
struct Outcome {
    converged: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command_line: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, command_line),
        Command::Fit(a) => fit(a, command_line),
        Command::Analyze(a) => analyze(a, command_line),
        Command::Compare(a) => compare(a, command_line),
    };
    match result {
        Ok(Outcome { converged: true }) => ExitCode::SUCCESS,
        Ok(Outcome { converged: false }) => {
            eprintln!("error: convergence diagnostics failed (pass --allow-nonconverged to accept)");
            ExitCode::from(EXIT_NONCONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<Error>(), Some(Error::Config(_) | Error::Toml(_)));
            ExitCode::from(if usage { EXIT_USAGE } else { EXIT_FAILURE })
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_run_manifest(
    out: &Path,
    command_line: Vec<String>,
    seed: u64,
    config_digest: String,
    dataset_digest: String,
    started: Instant,
    diagnostics: Vec<(String, DiagnosticsSummary)>,
) -> Result<()> {
    let manifest = RunManifest {
        command_line,
        software_version: pipeline::VERSION.into(),
        master_seed: seed,
        config_digest,
        dataset_digest,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        diagnostics,
    };
    report::write_json(&out.join("run_manifest.json"), &manifest)?;
    Ok(())
}

fn simulate(a: SimulateArgs, command_line: Vec<String>) -> Result<Outcome> {
    let started = Instant::now();
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let text = if text.lines().any(|l| l.trim_start().starts_with("preset")) {
                text
            } else {
                format!("preset = {:?}\n{text}", a.preset)
            };
            RunConfig::parse(&text)?
        }
        None => RunConfig::preset(&a.preset)?,
    };
    if let Some(seed) = a.seed {
        cfg.sim.seed = seed;
    }
    print!("{}", cfg.echo());
    let (data, truth, manifest) = pipeline::run_simulation(&cfg)?;
    ensure_dir(&a.out)?;
    io::write_ratings_file(&data, &a.out.join("ratings.csv"), a.format.into())?;
    io::write_truth_file(&TruthTable::from(&truth), &a.out.join("truth.csv"))?;
    report::write_json(&a.out.join("simulation.json"), &manifest)?;
    report::write_text(&a.out.join("effective_config.toml"), &cfg.echo())?;
    write_run_manifest(
        &a.out,
        command_line,
        cfg.sim.seed,
        manifest.config_digest.clone(),
        manifest.dataset_digest.clone(),
        started,
        Vec::new(),
    )?;
    eprintln!(
        "simulated {} calls; true ATE {:.4}; wrote {}",
        data.len(),
        manifest.true_values.eta,
        a.out.display()
    );
    Ok(Outcome { converged: true })
}

fn fit_options(flags: &FitFlags, sampler: &SamplerArgs) -> Result<FitOptions> {
    let (priors, sampler, thresholds) = sampler.resolve()?;
    Ok(FitOptions {
        kind: flags.model.into(),
        priors,
        sampler,
        thresholds,
        plugin_posterior: flags.plugin_posterior,
        difficulty_covariate: flags.difficulty_covariate,
        standardize: flags.standardize,
    })
}

fn keep_rounds(data: RatingDataset, rounds: Option<u32>) -> Result<RatingDataset> {
    match rounds {
        Some(n) => Ok(pipeline::with_rounds(&data, n)?),
        None => Ok(data),
    }
}

fn write_fit_outputs(out: &Path, output: &mut FitOutput, data: &RatingDataset, truth: Option<&TruthTable>) -> Result<bool> {
    if let Some(t) = truth {
        pipeline::attach_recovery(&mut output.report, &t.states_for(data)?)?;
    }
    ensure_dir(out)?;
    report::write_json(&out.join("fit_report.json"), &output.report)?;
    report::write_text(
        &out.join("per_call_posterior.csv"),
        &report::per_call_csv(&output.report.per_call_posterior)?,
    )?;
    let passed = output.report.diagnostics.as_ref().is_some_and(|d| d.passed());
    let r = &output.report;
    eprintln!(
        "fpr {:.4}  fnr {:.4}  tau {:.4}  ate {}",
        r.mean_fpr.mean,
        r.mean_fnr.mean,
        r.param("tau").map_or(f64::NAN, |s| s.mean),
        r.ate_posterior.map_or_else(|| "undefined".to_string(), |s| format!("{:.4}", s.mean)),
    );
    if let Some(d) = &r.diagnostics {
        eprintln!(
            "max split R-hat {}  min bulk ESS {}  divergences {}",
            d.max_rhat().map_or("undefined".into(), |v| format!("{v:.4}")),
            d.min_ess().map_or("undefined".into(), |v| format!("{v:.0}")),
            d.divergences
        );
    }
    Ok(passed)
}

fn fit(a: FitArgs, command_line: Vec<String>) -> Result<Outcome> {
    let started = Instant::now();
    let options = fit_options(&a.flags, &a.sampler)?;
    let data = keep_rounds(a.data.load()?, a.flags.rounds_keep)?;
    let truth = a.data.load_truth()?;
    let mut output = pipeline::fit(&data, &options)?;
    let passed = write_fit_outputs(&a.out, &mut output, &data, truth.as_ref())?;
    if a.dump_draws {
        let path = a.out.join("draws.csv");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        output.draws.write_csv(std::io::BufWriter::new(file))?;
    }
    let diag = output.report.diagnostics.as_ref().map(DiagnosticsSummary::from);
    write_run_manifest(
        &a.out,
        command_line,
        options.sampler.seed,
        output.report.manifest.config_digest.clone(),
        output.report.manifest.dataset_digest.clone(),
        started,
        diag.map(|d| ("fit".to_string(), d)).into_iter().collect(),
    )?;
    Ok(Outcome {
        converged: passed || a.allow_nonconverged,
    })
}

fn analyze(a: AnalyzeArgs, command_line: Vec<String>) -> Result<Outcome> {
    let started = Instant::now();
    let options = FitOptions {
        kind: a.flags.model.into(),
        plugin_posterior: a.flags.plugin_posterior,
        difficulty_covariate: a.flags.difficulty_covariate,
        standardize: a.flags.standardize,
        ..FitOptions::default()
    };
    let data = keep_rounds(a.data.load()?, a.flags.rounds_keep)?;
    let truth = a.data.load_truth()?;
    let file = File::open(&a.draws).with_context(|| format!("reading {}", a.draws.display()))?;
    let draws = PosteriorDraws::read_csv(BufReader::new(file))?;
    let mut output = pipeline::analyze(draws, &data, &options)?;
    let passed = write_fit_outputs(&a.out, &mut output, &data, truth.as_ref())?;
    let diag = output.report.diagnostics.as_ref().map(DiagnosticsSummary::from);
    write_run_manifest(
        &a.out,
        command_line,
        0,
        output.report.manifest.config_digest.clone(),
        output.report.manifest.dataset_digest.clone(),
        started,
        diag.map(|d| ("analyze".to_string(), d)).into_iter().collect(),
    )?;
    Ok(Outcome {
        converged: passed || a.allow_nonconverged,
    })
}

fn compare(a: CompareArgs, command_line: Vec<String>) -> Result<Outcome> {
    let started = Instant::now();
    let methods = pipeline::parse_methods(&a.methods)?;
    let (priors, sampler, thresholds) = a.sampler.resolve()?;
    let options = CompareOptions {
        fit: FitOptions {
            kind: ModelKind::Base,
            priors,
            sampler,
            thresholds,
            plugin_posterior: a.plugin_posterior,
            difficulty_covariate: a.difficulty_covariate,
            standardize: a.standardize,
        },
        tie_break: match a.tie_break {
            TieBreakArg::Zero => TieBreak::ToZero,
            TieBreakArg::One => TieBreak::ToOne,
        },
    };
    let data = io::read_ratings_file(&a.data, a.format.map(Into::into))
        .with_context(|| format!("reading {}", a.data.display()))?;
    let truth = io::read_truth_file(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    let truth_values: Option<TrueValues> = match &a.sim_manifest {
        Some(path) => {
            let manifest = SimManifest::read(path).with_context(|| format!("reading {}", path.display()))?;
            Some(manifest.true_values)
        }
        None => None,
    };
    let (table, results) = pipeline::compare(&data, &truth, truth_values, &methods, &options)?;

    ensure_dir(&a.out)?;
    report::write_json(&a.out.join("comparison.json"), &table)?;
    report::write_text(&a.out.join("comparison.csv"), &report::comparison_csv(&table.rows)?)?;

    let tau_draws: Vec<Vec<f64>> = results
        .iter()
        .map(|r| match &r.fit {
            Some(f) => {
                let j = f.draws.param_index("tau").expect("tau is always a parameter");
                f.draws.iter_draws().map(|d| d[j]).collect()
            }
            None => Vec::new(),
        })
        .collect();
    let mut series = Vec::new();
    let mut by_state = Vec::new();
    for (r, tau) in results.iter().zip(&tau_draws) {
        let Some(f) = &r.fit else { continue };
        let method = r.row.method.as_str();
        series.push(Series { method, quantity: "fpr", values: &f.fpr_draws });
        series.push(Series { method, quantity: "fnr", values: &f.fnr_draws });
        series.push(Series { method, quantity: "tau", values: tau });
        if let Some(eta) = &f.ate_draws {
            series.push(Series { method, quantity: "eta", values: eta });
        }
        by_state.push((method, f.report.per_call_posterior.as_slice()));
    }
    report::write_text(&a.out.join("figure_posterior_hist.csv"), &report::histogram_csv(&series, 40)?)?;
    report::write_text(
        &a.out.join("figure_posterior_by_state.csv"),
        &report::posterior_by_state_csv(&by_state, &truth.states_for(&data)?)?,
    )?;

    let mut diagnostics = Vec::new();
    for r in &results {
        if let Some(d) = r.fit.as_ref().and_then(|f| f.report.diagnostics.as_ref()) {
            diagnostics.push((r.row.method.clone(), DiagnosticsSummary::from(d)));
        }
    }
    let passed = diagnostics.iter().all(|(_, d)| d.passed);
    for row in &table.rows {
        eprintln!(
            "{:<8} corr {:.3}  fpr {:.3}  fnr {:.3}  tau {:.3}  eta {}",
            row.method,
            row.corr,
            row.fpr,
            row.fnr,
            row.tau,
            row.eta.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
        );
    }
    write_run_manifest(
        &a.out,
        command_line,
        options.fit.sampler.seed,
        table.config_digest.clone(),
        table.dataset_digest.clone(),
        started,
        diagnostics,
    )?;
    Ok(Outcome {
        converged: passed || a.allow_nonconverged,
    })
}

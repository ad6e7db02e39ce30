//! Batch front end: `estimate`, `study` and `synth`.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fanbase::error::Error;
use fanbase::evaluation::{loocv, write_report_files, LoocvOptions, Method, MetricReport};
use fanbase::gcp::{FitOptions, TrialSummary};
use fanbase::io::write_atomic;
use fanbase::pipeline::{
    estimate_event_day, load_dataset, ClockTime, DeltaRule, LossKind, TensorConfig, TensorMode,
    STUDY_RESOLUTIONS,
};
use fanbase::synth::{generate, write_dataset_files, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "fanbase", version, about = "HVAC fan power baselines by tensor completion")]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the event-day baseline for every window.
    Estimate(EstimateArgs),
    /// Leave-one-out study over methods, resolutions, modes and losses.
    Study(StudyArgs),
    /// Generate a synthetic dataset (CSV + manifest).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TensorArgs {
    #[arg(long, default_value_t = 12)]
    pub rank: usize,
    #[arg(long, default_value_t = 4)]
    pub trials: usize,
    /// Huber breakpoint in kW, or a fraction of the median day-mode entry
    /// with --delta-relative.
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long)]
    pub delta_relative: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
}

impl TensorArgs {
    fn delta_rule(&self) -> DeltaRule {
        if self.delta_relative {
            DeltaRule::RelativeToMedian(self.delta)
        } else {
            DeltaRule::Absolute(self.delta)
        }
    }

    fn fit(&self) -> FitOptions {
        FitOptions {
            rank: self.rank,
            trials: self.trials,
            seed: self.seed,
            max_iterations: self.max_iterations,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub resolution: u32,
    #[arg(long, default_value = "huber")]
    pub loss: String,
    #[arg(long, default_value = "per-fan")]
    pub mode: String,
    #[command(flatten)]
    pub tensor: TensorArgs,
    #[arg(long, default_value = "fanbase-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated: tensor, linterp, avg5, n3of6.
    #[arg(long, default_value = "tensor,linterp,avg5,n3of6")]
    pub methods: String,
    #[arg(long, default_value = "1,5,15,30")]
    pub resolutions: String,
    /// Tensor modes: per-fan, total.
    #[arg(long, default_value = "per-fan")]
    pub modes: String,
    /// Tensor losses: huber, l2.
    #[arg(long, default_value = "huber")]
    pub losses: String,
    #[command(flatten)]
    pub tensor: TensorArgs,
    /// NMBE with the `|τ|` divisor instead of `|τ| − 1`.
    #[arg(long)]
    pub conventional_nmbe: bool,
    #[arg(long, default_value = "fanbase-study")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// TOML SynthConfig; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub outliers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "fanbase-synth")]
    pub out: PathBuf,
}

/// Failure with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        serde_json::json!({
            "error": { "exit_code": self.code, "kind": self.kind, "message": self.message }
        })
        .to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let debug = format!("{e:?}");
        let kind = debug
            .split(|c: char| !c.is_alphanumeric())
            .next()
            .unwrap_or("Error")
            .to_string();
        CliError {
            code: if e.is_numerical() { 2 } else { 1 },
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn config_error(message: impl Into<String>) -> CliError {
    CliError::from(Error::InvalidConfig(message.into()))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_error("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| config_error(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Estimate(a) => cmd_estimate(a).map(|_| ()),
        Command::Study(a) => cmd_study(a).map(|_| ()),
        Command::Synth(a) => cmd_synth(a).map(|_| ()),
    })
}

fn parse_list<T>(text: &str, what: &str) -> CliResult<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| config_error(format!("{what}: {e}"))))
        .collect::<CliResult<_>>()?;
    if items.is_empty() {
        return Err(config_error(format!("{what}: empty list")));
    }
    Ok(items)
}

#[derive(Debug, Serialize)]
struct FitDiagnostics<'a> {
    building: &'a str,
    event_day: String,
    resolution: u32,
    mode: &'a str,
    loss: fanbase::loss::LossSpec,
    rank: usize,
    objective: f64,
    best_trial: usize,
    trials: &'a [TrialSummary],
    warnings: &'a [String],
}

/// Paths written by `estimate`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateFiles {
    pub baseline: PathBuf,
    pub diagnostics: PathBuf,
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<EstimateFiles> {
    let (dataset, warnings) = load_dataset(&args.manifest)?;
    let config = TensorConfig {
        mode: args.mode.parse()?,
        loss: args.loss.parse()?,
        delta: args.tensor.delta_rule(),
        fit: args.tensor.fit(),
    };
    let est = estimate_event_day(&dataset, args.resolution, &config)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::from(Error::io("<memory>", e));
    w.write_record(["window", "slot", "clock", "observed_kw", "baseline_kw"])
        .map_err(csv_err)?;
    for (wb, observed) in est.estimate.windows.iter().zip(&est.observed) {
        for ((slot, base), obs) in wb.window.slots().zip(&wb.values).zip(observed) {
            let clock = ClockTime(est.origin_minute + slot as u32 * args.resolution);
            w.write_record([
                wb.window.label.clone(),
                slot.to_string(),
                clock.to_string(),
                obs.to_string(),
                base.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::from(Error::io("<memory>", e.error())))?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::from(Error::io(&args.out, e)))?;
    let baseline = args.out.join("baseline.csv");
    write_atomic(&baseline, &bytes)?;

    let fit = &est.estimate.fit;
    let diag = FitDiagnostics {
        building: &dataset.meta.building,
        event_day: est.event_day.to_string(),
        resolution: args.resolution,
        mode: config.mode.name(),
        loss: est.loss,
        rank: fit.model.rank(),
        objective: fit.objective,
        best_trial: fit.best_trial,
        trials: &fit.trials,
        warnings: &warnings,
    };
    let diagnostics = args.out.join("fit.json");
    let text = serde_json::to_string_pretty(&diag).map_err(|e| CliError::from(Error::io(&diagnostics, e)))?;
    write_atomic(&diagnostics, text.as_bytes())?;
    Ok(EstimateFiles { baseline, diagnostics })
}

/// Expands the study grid in a fixed order: resolution, then method, then
/// mode and loss for the tensor method.
pub fn study_methods(args: &StudyArgs) -> CliResult<Vec<Method>> {
    let names: Vec<String> = parse_list(&args.methods, "--methods")?;
    let modes: Vec<TensorMode> = parse_list(&args.modes, "--modes")?;
    let losses: Vec<LossKind> = parse_list(&args.losses, "--losses")?;
    let mut methods = Vec::new();
    for name in names {
        match name.as_str() {
            "tensor" => {
                for &mode in &modes {
                    for &loss in &losses {
                        methods.push(Method::Tensor(TensorConfig {
                            mode,
                            loss,
                            delta: args.tensor.delta_rule(),
                            fit: args.tensor.fit(),
                        }));
                    }
                }
            }
            "linterp" => methods.push(Method::LinearInterp),
            "avg5" => methods.push(Method::Avg5),
            "n3of6" => methods.push(Method::Nearest3of6),
            other => return Err(config_error(format!("--methods: unknown method '{other}'"))),
        }
    }
    Ok(methods)
}

pub fn cmd_study(args: &StudyArgs) -> CliResult<MetricReport> {
    let resolutions: Vec<u32> = parse_list(&args.resolutions, "--resolutions")?;
    if let Some(r) = resolutions.iter().find(|r| !STUDY_RESOLUTIONS.contains(r)) {
        return Err(config_error(format!(
            "--resolutions: {r} not one of {STUDY_RESOLUTIONS:?}"
        )));
    }
    let methods = study_methods(args)?;
    let (dataset, warnings) = load_dataset(&args.manifest)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let options = LoocvOptions {
        conventional_nmbe: args.conventional_nmbe,
        ..LoocvOptions::default()
    };
    let mut reports = Vec::new();
    for &resolution in &resolutions {
        for method in &methods {
            log::info!("study: {} at {resolution} min", method.id());
            reports.push(loocv(&dataset, method, resolution, &options)?);
        }
    }
    let report = MetricReport::merge(reports);
    write_report_files(&report, &args.out)?;
    Ok(report)
}

pub fn synth_config(args: &SynthArgs) -> CliResult<SynthConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::from(Error::io(path, e)))?;
            toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = args.noise {
        config.noise_std = n;
    }
    if let Some(o) = args.outliers {
        config.outliers = o;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    Ok(config)
}

/// Returns the manifest path.
pub fn cmd_synth(args: &SynthArgs) -> CliResult<PathBuf> {
    let config = synth_config(args)?;
    let output = generate(&config)?;
    Ok(write_dataset_files(&config, &output, &args.out)?)
}

/// Convenience for tests and scripts: parse argv and run.
pub fn run_from<I, T>(argv: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError {
        code: 1,
        kind: "Usage".into(),
        message: e.to_string().lines().next().unwrap_or_default().to_string(),
    })?;
    run(cli)
}

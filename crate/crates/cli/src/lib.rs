//! `stcorr` command-line pipeline.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 configuration or usage
//! error, 3 data error (missing, malformed or too short), 4 computation
//! error (non-finite loss, undefined metric).

pub mod commands;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult, Kind};
pub use manifest::RunManifest;

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "STCORR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stcorr", version, about = "Correlation-information traffic forecasting pipeline")]
pub struct Cli {
    /// Worker threads for correlation kernels; 0 uses every core.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset with daily and weekly structure.
    Synth(SynthArgs),
    /// Spatial correlation tensor over the training split.
    Scorr(ScorrArgs),
    /// Temporal correlation report and period verdict.
    Tcorr(TcorrArgs),
    /// Print and store the period selection from a temporal report.
    Select(SelectArgs),
    /// Train a forecasting model.
    Train(TrainArgs),
    /// Write forecasts for one split.
    Predict(PredictArgs),
    /// Score a trained model on one split.
    Evaluate(EvaluateArgs),
    /// Reshape reports into plot-ready CSV files.
    ExportPlotData(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, default_value_t = 8)]
    pub sensors: usize,
    #[arg(long, default_value_t = 3)]
    pub weeks: usize,
    #[arg(long, default_value_t = 1)]
    pub attributes: usize,
    #[arg(long, default_value_t = 5)]
    pub interval: u32,
    #[arg(long, default_value_t = 50.0)]
    pub daily_amplitude: f64,
    #[arg(long, default_value_t = 10.0)]
    pub weekly_amplitude: f64,
    #[arg(long, default_value_t = 2.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Readings: binary tensor or long-format CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Edge list CSV.
    #[arg(long)]
    pub edges: PathBuf,
    /// Minutes between readings (CSV input only).
    #[arg(long, default_value_t = 5)]
    pub interval: u32,
    /// Treat every listed edge as weight 1.
    #[arg(long)]
    pub binary_adjacency: bool,
    /// Train/validation/test ratios.
    #[arg(long, default_value = "0.6,0.2,0.2", value_parser = parse_triple)]
    pub split: [f64; 3],
}

#[derive(Debug, Args)]
pub struct ScorrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = stcorr::DEFAULT_ETA)]
    pub eta: f64,
    /// Sliding window length; computes one tensor per window.
    #[arg(long, requires = "stride")]
    pub window: Option<usize>,
    #[arg(long, requires = "window")]
    pub stride: Option<usize>,
    /// Also write a CSV export next to the binary file.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TcorrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = stcorr::DEFAULT_ETA)]
    pub eta: f64,
    /// Hourly, daily and weekly confidence weights.
    #[arg(long, default_value = "0.95,0.95,0.85", value_parser = parse_triple)]
    pub weights: [f64; 3],
    #[arg(long, default_value_t = 12)]
    pub tau: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub tcorr: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Spatial correlation file from `stcorr scorr`.
    #[arg(long)]
    pub scorr: PathBuf,
    /// Temporal report from `stcorr tcorr`; its verdict sets the periods.
    #[arg(long)]
    pub tcorr: Option<PathBuf>,
    /// TOML model config.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named hyperparameter preset.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Keep every k-th sample of each split.
    #[arg(long, default_value_t = 1)]
    pub sample_stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Directory written by `stcorr train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub part: Part,
    #[arg(long, default_value_t = 1)]
    pub sample_stride: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for `report.json` and `horizon.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Evaluation reports (`report.json`).
    #[arg(long)]
    pub report: Vec<PathBuf>,
    /// Labels for the reports, in order; defaults to the parent directory name.
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long)]
    pub tcorr: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|_| "expected three comma-separated numbers".into())
}

/// Runs a parsed command inside a pool of `cli.threads` workers.
pub fn run(cli: Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Scorr(a) => commands::scorr(&a),
        Command::Tcorr(a) => commands::tcorr(&a),
        Command::Select(a) => commands::select(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::ExportPlotData(a) => commands::export_plot_data(&a),
    })
}

/// Parses `args` (including the program name) and runs them.
pub fn run_from<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::config(e.to_string()))?;
    run(cli)
}

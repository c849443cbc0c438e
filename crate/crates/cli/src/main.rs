//! `tracebench`: demonstrations, labeling, training, evaluation and the
//! teleoperation server behind one binary.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use tracebench::config::RunConfig;
use tracebench::policy::Ablation;
use tracebench::sim::ObjectPreset;
use tracebench::Error;

#[derive(Debug, Parser)]
#[command(name = "tracebench", version, about = "Tactile tracing benchmark pipeline")]
pub struct Cli {
    /// TOML config file; missing keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config value, e.g. `--set train.lr=3e-4` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record scripted-expert demonstrations.
    GenDemos(GenDemosArgs),
    /// Label a raw dataset with per-step weights and completion indices.
    Label(LabelArgs),
    /// Train a policy on a labeled dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the expert) over seeded trials.
    Eval(EvalArgs),
    /// Aggregate trial results into a table.
    Report(ReportArgs),
    /// Run the teleoperation server.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDemosArgs {
    #[arg(long, default_value = "rope")]
    pub preset: ObjectPreset,
    /// Successful demonstrations to keep.
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write a labeled dataset instead of a raw one.
    #[arg(long)]
    pub label: bool,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `train.ablation`.
    #[arg(long)]
    pub ablate: Option<Ablation>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV; defaults to the checkpoint path with a `.curves.csv` suffix.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "expert", conflicts_with = "expert")]
    pub ckpt: Option<PathBuf>,
    /// Drive the trials with the scripted expert instead of a checkpoint.
    #[arg(long)]
    pub expert: bool,
    /// Trials per preset; defaults to `eval.trials`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Defaults to `eval.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Presets to evaluate (repeatable); defaults to `sim.preset`.
    #[arg(long)]
    pub preset: Vec<ObjectPreset>,
    /// Fixed step budget; defaults to `eval.budget_factor` × the expert's mean episode length.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Directory for `results.jsonl` and `report.txt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Model name in the table.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `results.jsonl` files to pool.
    #[arg(long, num_args = 0..)]
    pub results: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long, default_value = "model")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Session dataset for recorded episodes.
    #[arg(long, default_value = "session_data")]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 30.0)]
    pub tick_hz: f64,
}

/// Help epilogue listing every config key with its default.
fn config_keys_help() -> String {
    let mut out = String::from("Config keys (set in --config FILE or with --set KEY=VALUE):\n");
    match RunConfig::default().keys() {
        Ok(keys) => {
            for (k, v) in keys {
                out.push_str(&format!("  {k} = {v}\n"));
            }
        }
        Err(e) => out.push_str(&format!("  (unavailable: {e})\n")),
    }
    out
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Precondition(_) => 2,
        Error::Divergence { .. } => 4,
        e if e.is_data_error() || matches!(e, Error::ShapeMismatch(_)) => 3,
        _ => 1,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("TRACEBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("TRACEBENCH_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::InvalidConfig(format!("{}: {io}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    base.with_overrides(&cli.overrides)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let command = Cli::command().after_long_help(config_keys_help()).after_help(config_keys_help());
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = configure_threads()
        .and_then(|()| load_config(&cli))
        .and_then(|config| commands::run(&cli.command, &config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

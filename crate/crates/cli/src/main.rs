//! `mlr`: generate mixture-of-linear-regression instances, fit them, score
//! the fits, and run seeded sweeps.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 not enough data,
//! 4 internal invariant violation.

mod bench;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Format;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "mlr", version, about = "Learn mixtures of linear regressions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset CSV and write its model JSON.
    Gen(GenArgs),
    /// Fit a dataset and write the report JSON.
    Fit(FitArgs),
    /// Match estimated weights to true ones.
    Eval(EvalArgs),
    /// Generate, fit and score one instance per seed.
    Bench(BenchArgs),
}

/// Flags shared by the commands that build or fit an experiment.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Experiment config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Dataset size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Target recovery error.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Covariance bound for generated instances and the learner.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Weight separation for generated instances and the learner.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Smallest mixing weight assumed when no model is known.
    #[arg(long)]
    pub pmin: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Keep full per-iteration traces in reports.
    #[arg(long)]
    pub verbose_trace: bool,
}

#[derive(Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model JSON path; defaults to the dataset path with a `.model.json` extension.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// True model JSON, used for bounds and evaluation.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Score the fit against the true model and audit removals with the hidden labels.
    #[arg(long)]
    pub eval_with_truth: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Fit report, model JSON, or a list of weight vectors.
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated seeds; overrides --seed and the config.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub seeds: Option<Vec<u64>>,
    /// Run this many consecutive seeds starting at --seed.
    #[arg(long)]
    pub count: Option<usize>,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Fit(a) => commands::fit(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => bench::bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("mlr: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(4),
    }
}

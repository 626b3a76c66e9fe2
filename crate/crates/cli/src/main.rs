//! `pirsim` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Simulate passive-infrared sensor-tower events, extract features and
/// evaluate intruder/clutter classifiers.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 usage error or unmet statistical precondition.
#[derive(Debug, Parser)]
#[command(name = "pirsim", version, about, long_about = None)]
pub struct Cli {
    /// TOML configuration merged over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set simulation.oversample=4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Random seed; stamped into every artifact.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: number of cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output path; its meaning depends on the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled dataset (default output directory: `dataset`).
    Simulate(SimulateArgs),
    /// Extract E8, rho_max and C60 features from a dataset into a CSV file
    /// (default: `<dataset>/features.csv`).
    Featurize(FeaturizeArgs),
    /// Cross-validate a classifier and write a JSON report plus a text table
    /// (default: next to the feature file).
    Evaluate(EvaluateArgs),
    /// Diagnostics for one event file: channel statistics, chirplet
    /// decompositions, rho_max and the truth-table verdict. With `--out DIR`
    /// also writes plot-ready CSV and JSON files.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub human: usize,
    #[arg(long, default_value_t = 0)]
    pub animal: usize,
    #[arg(long, default_value_t = 0)]
    pub clutter: usize,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Dataset directory holding `manifest.json`.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    E8,
    #[value(name = "e8+rho")]
    E8Rho,
    C60,
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridChoice {
    /// 14 linear plus 154 RBF hyperparameter points.
    Full,
    /// A small grid for smoke tests.
    Quick,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Feature CSV written by `featurize`.
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = GridChoice::Full)]
    pub grid: GridChoice,
    /// Pipeline mode: also write the trained two-stage model here.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Event CSV file.
    pub event: PathBuf,
    /// Truth-table thresholds for A,B,C,D; calibrated from idle
    /// simulations when omitted.
    #[arg(long, value_delimiter = ',', value_name = "A,B,C,D")]
    pub thresholds: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_USAGE),
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

//! Command-line front end for `halo-choice`.
//!
//! Every command writes fixed file names under its `--out` directory and
//! prints a short summary. Errors surface as one line,
//! `error: <kind>: <message>`, so scripts can parse them.

mod benchmark;
mod error;
mod fit_cmd;
mod flags;
mod generate;
mod scaling;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

pub use benchmark::{cmd_benchmark, BenchmarkArgs, BenchmarkOutcome};
pub use error::CliError;
pub use fit_cmd::{cmd_fit, FitArgs, FitOutcome};
pub use flags::FitFlags;
pub use generate::{cmd_generate, GenerateArgs, GenerateOutcome};
pub use scaling::{cmd_scaling, ScalingArgs, ScalingRow};

const OUTPUTS: &str = "\
Outputs (under --out):
  generate   <name>.jsonl, <name>.truth.json
  fit        params.json, trace.csv, config.toml
  benchmark  reports.csv, summary.json, table.csv
  scaling    scaling.csv";

#[derive(Debug, Parser)]
#[command(name = "halo-choice", version, about = "Fit and evaluate halo choice models", after_help = OUTPUTS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a low-rank ground truth and a transaction dataset from it.
    Generate(GenerateArgs),
    /// Fit one model family to a dataset.
    Fit(FitArgs),
    /// Fit several families on several categories and seeds; report wins
    /// and relative loss.
    Benchmark(BenchmarkArgs),
    /// Parameter recovery and KL-to-truth across problem sizes.
    Scaling(ScalingArgs),
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args, out).map(drop),
        Command::Fit(args) => cmd_fit(&args, out).map(drop),
        Command::Benchmark(args) => cmd_benchmark(&args, out).map(drop),
        Command::Scaling(args) => cmd_scaling(&args, out).map(drop),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliError::from_clap)?;
    run(cli, out)
}

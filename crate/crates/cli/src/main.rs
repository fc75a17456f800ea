//! `lrmf`: simulate Vlasov–Poisson snapshots, train ConvMF networks, and
//! evaluate or benchmark them against SVD baselines.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{benchmark, evaluate, export, simulate, train};
use config::ConfigFile;

pub const VERSION: &str = env!("LRMF_VERSION");

#[derive(Debug, Parser)]
#[command(name = "lrmf", version = VERSION, about = "Low-rank factorization of kinetic simulation snapshots")]
struct Cli {
    /// TOML file with `[simulate]`, `[train]`, `[evaluate]`, `[benchmark]`
    /// and `[export]` sections; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Vlasov–Poisson solver and write a VPTS time series.
    Simulate(simulate::SimulateArgs),
    /// Train one ConvMF network per requested rank.
    Train(train::TrainArgs),
    /// Score frames with every requested method and write loss CSVs.
    Evaluate(evaluate::EvaluateArgs),
    /// Time factorization methods on one frame of each input (single thread).
    Benchmark(benchmark::BenchmarkArgs),
    /// Write frames, field energy and optional network factors as CSV.
    Export(export::ExportArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Simulate(args) => simulate::run(args.merged(file.simulate)),
        Command::Train(args) => train::run(args.merged(file.train)),
        Command::Evaluate(args) => evaluate::run(args.merged(file.evaluate)),
        Command::Benchmark(args) => benchmark::run(args.merged(file.benchmark)),
        Command::Export(args) => export::run(args.merged(file.export)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `topoidx`: build model snapshots, estimate strong indices, run certified
//! homotopy pipelines and cross-check the Kitaev table.

mod commands;
mod config;
mod error;
mod output;
mod table;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "topoidx", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model Hamiltonian, check gap, class and locality, save a snapshot
    Build(Flags),
    /// Estimate the strong index of a snapshot or model
    Index(Flags),
    /// Run a certified homotopy pipeline
    Homotopy(Flags),
    /// Kitaev table with the experiments realizing its cells
    Table(Flags),
    /// Fast self-checks, and a snapshot re-check with --snapshot
    Verify(Flags),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("TOPOIDX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("TOPOIDX_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (name, flags, f): (&str, Flags, fn(&RunConfig) -> Result<(), CliError>) = match cli.command {
        Command::Build(f) => ("build", f, commands::build),
        Command::Index(f) => ("index", f, commands::index),
        Command::Homotopy(f) => ("homotopy", f, commands::homotopy),
        Command::Table(f) => ("table", f, table::table),
        Command::Verify(f) => ("verify", f, commands::verify),
    };
    let cfg = RunConfig::resolve(name, &flags)?;
    f(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use tcl_chaos_cli::commands::{run, Command};
use tcl_chaos_cli::config::{load, Overrides};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sub {
    Spectrum,
    Unfold,
    Stats,
    Sff,
    Sweep,
    Map,
    Poincare,
    Plot,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Spectrum => Command::Spectrum,
            Sub::Unfold => Command::Unfold,
            Sub::Stats => Command::Stats,
            Sub::Sff => Command::Sff,
            Sub::Sweep => Command::Sweep,
            Sub::Map => Command::Map,
            Sub::Poincare => Command::Poincare,
            Sub::Plot => Command::Plot,
        }
    }
}

/// Spectral statistics of the Tavis-Cummings lattice and its driven impurity.
///
/// Settings come from the TOML file, then TCL_CHAOS__SECTION__KEY
/// environment variables, then the flags below.
#[derive(Debug, Parser)]
#[command(name = "tcl-chaos", version)]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, short)]
    workers: Option<usize>,
    /// Seed for stochastic steps.
    #[arg(long, short)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = Command::from(args.command);
    let flags = Overrides {
        out: args.out,
        workers: args.workers,
        seed: args.seed,
    };
    let result = load(args.config.as_deref(), std::env::vars(), &flags).and_then(|cfg| run(command, &cfg));
    match result {
        Ok(report) => {
            for p in &report.outputs {
                println!("{}", p.display());
            }
            println!("{}", report.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = e.record(Some(command.name()));
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(2)
        }
    }
}

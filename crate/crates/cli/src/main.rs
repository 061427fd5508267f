use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wavemorse_cli::{run, Overrides};

/// Spectral flow, relative Morse index and periodic wave solutions from a
/// JSON run configuration.
#[derive(Debug, Parser)]
#[command(name = "wavemorse", version)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json and grid CSVs; overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for all sampling; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Solve even when a hypothesis check fails.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        output: args.output,
        force: args.force,
    };
    match run(&args.config, &overrides) {
        Ok(dir) => {
            eprintln!("report written to {}", dir.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `confgen`: calibrate selection thresholds on JSONL record files, apply
//! them, sweep levels against a test split, and verify coverage by
//! simulation.
//!
//! Exit codes: 0 success, 2 validation or parse error, 3 calibration fell
//! back to abstention (the threshold is `inf`; output is still printed).

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "confgen", version, about, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the selection threshold on a record file (JSON to stdout)
    Calibrate {
        /// JSONL record file
        records: PathBuf,
        #[command(flatten)]
        opts: config::Opts,
    },
    /// Apply a threshold to every record, one JSON line per input line
    Apply {
        /// JSONL record file
        records: PathBuf,
        /// Threshold: a number, "inf", or "-inf"
        lambda: String,
        #[command(flatten)]
        opts: config::Opts,
    },
    /// Calibrate at each level on one file, evaluate on another (CSV)
    Sweep {
        /// JSONL calibration records (or correctness matrix with --forest)
        cal: PathBuf,
        /// JSONL test records (or correctness matrix with --forest)
        test: PathBuf,
        /// Treat the files as ensemble correctness matrices and run the
        /// smallest-subset demo with the configured k
        #[arg(long)]
        forest: bool,
        #[command(flatten)]
        opts: config::Opts,
    },
    /// Monte Carlo coverage verification on a synthetic process (CSV)
    Simulate {
        #[command(flatten)]
        opts: config::Opts,
    },
    /// Threshold-jump diagnostics for the admissibility ceiling (JSON)
    Diagnose {
        /// JSONL record file (calibration records plus one held-out record)
        records: PathBuf,
        #[command(flatten)]
        opts: config::Opts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

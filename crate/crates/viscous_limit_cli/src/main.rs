//! `vlimit`: command-line driver for the viscous_limit library.
//!
//! Exit codes: 0 success, 2 a structural hypothesis fails for the input
//! system, 1 numerical, configuration or I/O failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::config::{parse_config, Command};

#[derive(Debug, Parser)]
#[command(name = "vlimit", version, about = "Vanishing-viscosity Riemann and boundary Riemann solvers")]
struct Cli {
    /// analyze | envelope | riemann | boundary-riemann | layer | simulate | counterexample | verify.
    /// Overrides the `command` key of the config.
    command: Option<Command>,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized sample states.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reject unknown configuration keys instead of warning.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let cfg = match parse_config(&text, cli.command, cli.strict) {
        Ok((cfg, warnings)) => {
            for w in warnings {
                eprintln!("warning: {}:{w}", cli.config.display());
            }
            cfg
        }
        Err(e) => {
            eprintln!("error: {}:{e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    match commands::run(&cfg, &cli.out, cli.seed) {
        Ok((summary, code)) => {
            for r in summary.rows.iter().filter(|r| matches!(r.status, output::Status::Fail | output::Status::Error)) {
                eprintln!("{}: {:?} {}", r.check, r.status, r.detail);
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

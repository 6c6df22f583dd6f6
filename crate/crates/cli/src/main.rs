//! `conformal-disk`: solves and analyses the prescribed Gaussian and geodesic
//! curvature problem on the unit disk from a JSON run configuration.
//!
//! Exit status: 0 when the command completed with a converged result,
//! 2 when it completed without one, 1 on configuration or I/O errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::Outcome;
use config::{Command, Overrides, RunConfig};
use output::Staging;

#[derive(Debug, Parser)]
#[command(name = "conformal-disk", version, about = "Conformal metrics on the disk with prescribed Gaussian and geodesic curvature")]
struct Cli {
    /// Defaults to the `command` of the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON run configuration; the flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn load(cli: &Cli) -> Result<(Command, RunConfig), config::ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::from_flags(&cli.overrides)?,
    };
    cfg.apply(&cli.overrides);
    let command = cli.command.or(cfg.command).ok_or_else(|| config::ConfigError::Invalid("no command given on the command line or in the config".into()))?;
    cfg.command = Some(command);
    cfg.validate(command)?;
    Ok((command, cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, cfg) = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let staging = match Staging::new(&cfg.output_dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot stage output next to {}: {e}", cfg.output_dir.display());
            return ExitCode::from(1);
        }
    };
    let outcome = match commands::run(command, &cfg, &staging) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match staging.commit() {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: writing {}: {e}", cfg.output_dir.display());
            return ExitCode::from(1);
        }
    }
    match outcome {
        Outcome::Completed => ExitCode::SUCCESS,
        Outcome::NotConverged => {
            eprintln!("completed without a converged result");
            ExitCode::from(2)
        }
    }
}

//! `qns`: simulate probe experiments and estimate noise spectra.
//!
//! Exit status is 0 on success, 2 for configuration or input errors and 3
//! when an estimator fails. Errors go to stderr as `error: <Name>: ...`.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

use config::Overrides;

#[derive(Parser)]
#[command(name = "qns", version, about = "Model-based qubit noise spectroscopy")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate survival probabilities for the configured noise models.
    Simulate(Overrides),
    /// Estimate a spectrum from a dataset with one method.
    Estimate(Overrides),
    /// Fit every SchWARMA order up to max_params and pick one by criterion.
    Select(Overrides),
    /// Fit the native scale beta of a native-plus-injected composite.
    Composite(Overrides),
    /// Sweep a resonance between two FTTPS bins and compare peak errors.
    Superres(Overrides),
}

/// Failure classes mapped onto exit codes.
pub enum CliError {
    /// Bad config, flags or input files.
    Config { name: &'static str, message: String },
    /// An estimator or simulator failed on valid input.
    Estimator(qns_core::QnsError),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config { name: "ConfigError", message: message.into() }
    }

    /// A core error while reading inputs.
    pub fn input(e: qns_core::QnsError) -> Self {
        CliError::Config { name: e.name(), message: e.to_string() }
    }
}

impl From<qns_core::QnsError> for CliError {
    fn from(e: qns_core::QnsError) -> Self {
        CliError::Estimator(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("error: ConfigError: {}", e.to_string().trim_end());
            return ExitCode::from(2);
        }
        Err(e) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.verb {
        Verb::Simulate(o) => commands::simulate(o),
        Verb::Estimate(o) => commands::estimate(o),
        Verb::Select(o) => commands::select(o),
        Verb::Composite(o) => commands::composite(o),
        Verb::Superres(o) => commands::superres(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config { name, message }) => {
            if message.starts_with(name) {
                eprintln!("error: {message}");
            } else {
                eprintln!("error: {name}: {message}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Estimator(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

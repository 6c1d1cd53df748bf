//! `ncmt`: corpus generation, training, kNN datastores, decoding,
//! evaluation, the tipping-point sweep and the idiom test-set pipeline.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric divergence.

mod commands;
mod io;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use ncmt::trainer::TrainError;

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(TrainError::Divergence { .. }) = cause.downcast_ref::<TrainError>() {
            return 4;
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `mrad`: synthesis, detection, outlier maps and streaming from the shell.
//!
//! Exit status is 0 on success, 2 for invalid arguments or input and 1 for
//! runtime failures.

mod commands;
mod io;
mod map;

use std::process::ExitCode;

use clap::Parser;

/// Failure class, mapped to the process exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<mrad::Error> for Failure {
    fn from(e: mrad::Error) -> Self {
        use mrad::Error::*;
        match e {
            InvalidParameter { .. } | SeriesTooShort { .. } | EmptySeries | ZeroVariance => {
                Failure::Usage(e.into())
            }
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            match failure {
                Failure::Usage(_) => ExitCode::from(2),
                Failure::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}

//! Command-line front end `qls`.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for numerical failures.
//! Failures print one JSON object on standard error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod io;

pub use args::ModelArgs;
pub use io::{sha256_file, RunManifest};

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "qls",
    version,
    about = "Dark and black solitons of quasilinear Schrödinger equations"
)]
pub struct Cli {
    /// Write a run manifest (command line, model, seed, digests) to this file
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Kink or gray soliton profile as CSV (x, re, im, abs, eta, phase)
    Profile(commands::ProfileArgs),
    /// Traveling-wave potential V_c on a xi grid as CSV (xi, V)
    Potential(commands::PotentialArgs),
    /// Energy, momenta and Lyapunov functional of a field CSV, as JSON
    Functionals(commands::FunctionalsArgs),
    /// Slope of the momentum at c = 0 and the stability verdict
    Criterion(commands::CriterionArgs),
    /// Slope over a kappa grid as CSV (kappa, p_prime_0, verdict, error)
    Sweep(commands::SweepArgs),
    /// Time evolution with a trace CSV
    Evolve(commands::EvolveArgs),
    /// Data behind the kink-profile and slope-versus-kappa figures
    Figures(commands::FiguresArgs),
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation { kind: String, message: String },
    Numerical { kind: String, message: String },
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure::Validation {
            kind: "invalid_input".into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation { .. } => 2,
            Failure::Numerical { .. } => 3,
        }
    }

    fn json(&self) -> String {
        let (kind, message) = match self {
            Failure::Validation { kind, message } | Failure::Numerical { kind, message } => (kind, message),
        };
        serde_json::json!({ "error": kind, "message": message, "exit_code": self.exit_code() }).to_string()
    }
}

impl From<qls_core::Error> for Failure {
    fn from(e: qls_core::Error) -> Self {
        let kind = e.kind().to_string();
        let message = e.to_string();
        if e.is_validation() {
            Failure::Validation { kind, message }
        } else {
            Failure::Numerical { kind, message }
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation {
            kind: "io".into(),
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Validation {
            kind: "csv".into(),
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Validation {
            kind: "json".into(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let f = Failure::Validation {
                kind: "usage".into(),
                message: e.to_string().lines().next().unwrap_or("invalid arguments").to_string(),
            };
            eprintln!("{}", f.json());
            return f.exit_code();
        }
    };
    let command_line = argv.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    match execute(cli, command_line) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.json());
            f.exit_code()
        }
    }
}

fn execute(cli: Cli, command_line: Vec<String>) -> CliResult<()> {
    let mut manifest = RunManifest::start(command_line);
    match &cli.command {
        Command::Profile(a) => commands::profile(a, &mut manifest)?,
        Command::Potential(a) => commands::potential(a, &mut manifest)?,
        Command::Functionals(a) => commands::functionals(a, &mut manifest)?,
        Command::Criterion(a) => commands::criterion(a, &mut manifest)?,
        Command::Sweep(a) => commands::sweep(a, &mut manifest)?,
        Command::Evolve(a) => commands::evolve(a, &mut manifest)?,
        Command::Figures(a) => commands::figures(a, &mut manifest)?,
    }
    if let Some(path) = &cli.manifest {
        manifest.finish(path)?;
    }
    Ok(())
}

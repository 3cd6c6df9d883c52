//! Command-line front end. [`run`] parses argv, runs one subcommand and
//! returns the process exit code: 0 on success, 1 for invalid input and 2
//! when a solver does not converge. Errors are written to stderr as a JSON
//! object.

pub mod args;
mod commands;
pub mod schema;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::Parser;
use serde_json::json;

use srsync::cumulant::CumulantError;
use srsync::model::ModelError;
use srsync::oracle::OracleError;
use srsync::spectrum::SpectrumError;
use srsync::sweep::SweepError;

pub use schema::SCHEMA_VERSION;

pub const WORKERS_ENV: &str = "SRSYNC_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Validation,
    Io,
    Solver,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage | ErrorKind::Validation | ErrorKind::Io => 1,
            ErrorKind::Solver => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Validation => "validation",
            ErrorKind::Io => "io",
            ErrorKind::Solver => "solver",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// Extra machine-readable context, e.g. failed grid points.
    pub details: Option<serde_json::Value>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            details: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, message)
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Solver, message)
    }

    fn to_json(&self) -> serde_json::Value {
        let mut error = json!({ "kind": self.kind.name(), "message": self.message });
        if let Some(details) = &self.details {
            error["details"] = details.clone();
        }
        json!({ "schema_version": SCHEMA_VERSION, "error": error })
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::new(ErrorKind::Io, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(ErrorKind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(ErrorKind::Io, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<CumulantError> for CliError {
    fn from(e: CumulantError) -> Self {
        let kind = match e {
            CumulantError::BadHorizon { .. } | CumulantError::ZeroPump | CumulantError::OutOfValidity { .. } => {
                ErrorKind::Validation
            }
            CumulantError::Integration(_) | CumulantError::NonConvergence { .. } => ErrorKind::Solver,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        let kind = match e {
            SpectrumError::NonFiniteGrid => ErrorKind::Validation,
            SpectrumError::NonPositiveLinewidth(_) => ErrorKind::Solver,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Grid(_) | SweepError::Params(_) | SweepError::Workers(_) => Self::validation(e.to_string()),
            SweepError::Solver(inner) => inner.into(),
            SweepError::Bracket { ref scan, .. } => {
                let scan: Vec<_> = scan
                    .iter()
                    .map(|s| json!({ "w": s.params.w, "gamma": s.gamma, "delta_mod": s.delta_mod }))
                    .collect();
                Self {
                    kind: ErrorKind::Solver,
                    message: e.to_string(),
                    details: Some(json!({ "scan": scan })),
                }
            }
            SweepError::Regression(_) => Self::solver(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooLarge { .. } | OracleError::Params(_) | OracleError::BadTimeGrid => {
                Self::validation(e.to_string())
            }
            OracleError::Cumulant(inner) => inner.into(),
            OracleError::Propagation(_) | OracleError::NonConvergence { .. } | OracleError::Fit(_) => {
                Self::solver(e.to_string())
            }
        }
    }
}

/// Where a command writes its results.
pub struct Io<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Opens `path` for writing, or hands back stdout.
fn sink<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::new(ErrorKind::Io, format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn write_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Runs the tool with the process environment and standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_workers = std::env::var(WORKERS_ENV).ok();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    run_with(
        argv,
        env_workers.as_deref(),
        &mut Io {
            stdout: &mut out,
            stderr: &mut err,
        },
    )
}

/// [`run`] with an explicit `SRSYNC_WORKERS` value and output streams.
pub fn run_with<I, T>(argv: I, env_workers: Option<&str>, io: &mut Io) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(io.stdout, "{}", e.render());
                let code = if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { 0 };
                return code;
            }
            return report(io, &CliError::new(ErrorKind::Usage, e.render().to_string().trim_end()));
        }
    };
    match commands::dispatch(&cli, env_workers, io) {
        Ok(()) => 0,
        Err(e) => report(io, &e),
    }
}

fn report(io: &mut Io, e: &CliError) -> i32 {
    let _ = serde_json::to_writer(&mut *io.stderr, &e.to_json());
    let _ = writeln!(io.stderr);
    e.kind.exit_code()
}

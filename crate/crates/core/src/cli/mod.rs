//! Command-line front end: JSON run configuration, reproducible outputs and
//! the `spectrum`, `flow`, `continue` and `validate` commands.
//!
//! Exit codes: 0 success (including a stationary end), 1 failed validation
//! or IO error, 2 configuration error, 3 restarts exhausted, 4 numerical
//! failure.

mod commands;
pub mod config;
pub mod output;
pub mod validate;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_continue, cmd_flow, cmd_spectrum, cmd_validate, outcome_code};
pub use config::{InitialData, RunConfig, RUN_FORMAT};

use crate::dirac::DiracError;
use crate::flow::FlowError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {message}")]
    Config {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Flow(FlowError::InvalidConfig(_)) => 2,
            CliError::Flow(FlowError::RestartExhausted { .. }) => 3,
            CliError::Io(_) => 1,
            _ => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "restart_exhausted",
            1 => "io",
            _ => "numerical_failure",
        }
    }

    /// Machine-readable error report.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Config { line, column, .. } = self {
            v["line"] = (*line).into();
            v["column"] = (*column).into();
        }
        v
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "dhflow",
    version,
    about = "Heat flow of alpha-Dirac-harmonic maps on flat spin tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random choice (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the human-readable summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Near-zero spectrum of the Dirac operator along the initial map.
    Spectrum(Common),
    /// Run the coupled flow.
    Flow(Common),
    /// Run the flow along a decreasing alpha schedule.
    Continue(Common),
    /// Run the invariant suite and report measured against allowed values.
    Validate(Common),
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported as JSON on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    type Driver = fn(&RunConfig, bool) -> Result<i32, CliError>;
    let (common, driver): (Common, Driver) = match cli.command {
        Command::Spectrum(c) => (c, cmd_spectrum),
        Command::Flow(c) => (c, cmd_flow),
        Command::Continue(c) => (c, cmd_continue),
        Command::Validate(c) => (c, cmd_validate),
    };
    let result = RunConfig::load(&common.config)
        .and_then(|c| c.resolve(common.seed, common.out.clone()))
        .and_then(|config| driver(&config, common.quiet));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

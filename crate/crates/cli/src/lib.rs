//! Operator commands for the merging benchmark.

pub mod args;
pub mod commands;
pub mod config_file;

use std::fmt;

pub use args::{Cli, Command};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const RUNTIME: i32 = 3;
    pub const EVALUATOR: i32 = 4;
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    /// The LLM could not be reached and rubric fallback was off.
    Evaluator(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Runtime(_) => exit::RUNTIME,
            CliError::Evaluator(_) => exit::EVALUATOR,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime fault: {m}"),
            CliError::Evaluator(m) => write!(f, "evaluator unreachable: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mergebench::Error> for CliError {
    fn from(e: mergebench::Error) -> Self {
        use mergebench::Error as E;
        match e {
            E::Validation(_) | E::Parse { .. } | E::Io { .. } => CliError::Config(e.to_string()),
            E::Transport(_) => CliError::Evaluator(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses argv (after config-file expansion) and runs the command.
pub fn run(argv: Vec<std::ffi::OsString>) -> CliResult<()> {
    use clap::Parser;
    let argv = config_file::expand(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    commands::dispatch(cli.command)
}

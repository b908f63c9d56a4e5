use std::fmt;

use ladderfp_core::Error as CoreError;

/// Failure of a run, split by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: configuration, flags or an impossible request. Exit code 1.
    Validation(String),
    /// The computation itself failed. Exit code 2.
    Numerical(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(e) => write!(f, "i/o failure: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::NoTransition { .. }
            | CoreError::GridTooCoarse { .. }
            | CoreError::GridMismatch(_)
            | CoreError::OverBudget { .. } => CliError::Validation(e.to_string()),
            CoreError::NotConverged { .. }
            | CoreError::Lapack { .. }
            | CoreError::NoPlateau(_)
            | CoreError::EmptyState(_)
            | CoreError::Linalg(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

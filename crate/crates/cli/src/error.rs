use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing {what} at {path}; run `forecastad {producer}` first")]
    Missing { what: &'static str, path: PathBuf, producer: &'static str },

    #[error(transparent)]
    Core(#[from] forecastad::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for configuration problems, 3 for a missing
    /// upstream artifact, 4 for numerical failures and 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use forecastad::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            CliError::Core(E::Config(_)) => 2,
            CliError::Core(E::Numerical(_)) => 4,
            _ => 1,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unreadable input: {0}")]
    Input(String),
    #[error("input contains no valid records")]
    EmptyInput,
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("unsupported artifact version {found} (expected {expected})")]
    Version { found: String, expected: String },
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("state {state} has no observed exits and no fallback row is enabled")]
    UnobservedRow { state: usize },
    #[error("state {state} has no observations in any index level")]
    UnobservedState { state: usize },
    #[error("zero variance series: autocorrelation undefined")]
    ZeroVariance,
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Broad failure class, used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) | Error::Config(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Input(_)
            | Error::EmptyInput
            | Error::Format(_)
            | Error::Version { .. }
            | Error::ZeroVariance => ErrorClass::Data,
            Error::DegenerateGrid(_)
            | Error::UnobservedRow { .. }
            | Error::UnobservedState { .. }
            | Error::Numerical(_) => ErrorClass::Numerical,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical/estimation.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use punitive_core::Error as CoreError;
use thiserror::Error;

use crate::config::ConfigDiagnostic;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const ASSUMPTION: u8 = 3;
    pub const THRESHOLD_NOT_FOUND: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {0}")]
    Config(ConfigDiagnostic),

    #[error("line {line}: {source}")]
    Assumption { line: usize, source: CoreError },

    #[error("{0}")]
    ThresholdNotFound(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<ConfigDiagnostic> for CliError {
    fn from(d: ConfigDiagnostic) -> Self {
        CliError::Config(d)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// Attaches a config line to a core validation error.
    pub fn from_core_at(e: CoreError, line: usize) -> Self {
        match e {
            CoreError::Assumption { .. } => CliError::Assumption { line, source: e },
            other => CliError::Config(ConfigDiagnostic { line, message: other.to_string() }),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => exit::CONFIG,
            CliError::Assumption { .. } | CliError::Core(CoreError::Assumption { .. }) => exit::ASSUMPTION,
            CliError::ThresholdNotFound(_) | CliError::Core(CoreError::ThresholdNotFound { .. }) => {
                exit::THRESHOLD_NOT_FOUND
            }
            CliError::Core(
                CoreError::InvalidModel { .. }
                | CoreError::InvalidPolicy(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::InvalidConfig(_)
                | CoreError::NotGreedy
                | CoreError::TruthfulPolicy
                | CoreError::GridTooLarge(_),
            ) => exit::CONFIG,
            CliError::Core(_) | CliError::Io(_) => exit::FAILURE,
        }
    }
}

use thiserror::Error;

/// Failures of a command; the variant fixes the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unusable configuration or input specification (exit code 2).
    #[error("config error: {0}")]
    Config(String),
    /// Failure while running or writing results (exit code 3).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<fluence_core::Error> for CliError {
    fn from(e: fluence_core::Error) -> Self {
        match e {
            fluence_core::Error::InvalidArgument(m) | fluence_core::Error::Parse(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

use thiserror::Error;

/// Errors surfaced by the binary, each mapped to a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or config (exit 1).
    #[error("{0}")]
    Config(String),

    /// A run completed but the protocol or check failed (exit 2).
    #[error("{0}")]
    Failure(String),

    /// Resource, truncation or grid guard (exit 3).
    #[error("{0}")]
    Guard(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Failure(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<memamp::Error> for CliError {
    fn from(e: memamp::Error) -> Self {
        use memamp::Error as E;
        match e {
            E::InvalidConfig { .. } | E::OutOfRange { .. } | E::Domain(_) | E::DimensionMismatch(_) => {
                CliError::Config(e.to_string())
            }
            E::ResourceGuard(_) | E::TruncationLeakage { .. } | E::TruncationOverflow(_) => {
                CliError::Guard(e.to_string())
            }
            E::ZeroNorm | E::MixedState | E::UndefinedMetric(_) => CliError::Failure(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

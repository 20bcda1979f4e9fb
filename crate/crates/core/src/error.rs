use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside the allowed range {range}")]
    OutOfRange {
        what: &'static str,
        value: String,
        range: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncation overflow: {0}")]
    TruncationOverflow(String),

    #[error("truncation leakage: population {population:e} in top level of {mode} exceeds {limit:e}")]
    TruncationLeakage {
        mode: &'static str,
        population: f64,
        limit: f64,
    },

    #[error("zero-norm state where a normalizable state is required")]
    ZeroNorm,

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("conditional state is mixed; use reduced_conditional_density")]
    MixedState,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid config key `{key}`: {message}")]
    InvalidConfig { key: String, message: String },
}

impl Error {
    pub(crate) fn out_of_range(
        what: &'static str,
        value: impl ToString,
        range: impl ToString,
    ) -> Self {
        Error::OutOfRange {
            what,
            value: value.to_string(),
            range: range.to_string(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            message: message.into(),
        }
    }
}

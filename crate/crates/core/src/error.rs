use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical fault: {0}")]
    NumericalFault(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Every offending field of a configuration, one message each.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFault(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

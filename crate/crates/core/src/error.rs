use thiserror::Error;

/// Invalid scenario or experiment configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key=value`, got `{text}`")]
    Syntax { path: String, line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read `{path}`: {reason}")]
    Io { path: String, reason: String },
}

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }

    pub fn value(key: &str, value: &str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }
}

/// Local beaconing-frequency adaptation is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("beaconing frequency cannot be reduced further")]
pub struct CannotReduce;

/// Argument outside the domain of a propagation formula.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("distance must be positive, got {0} m")]
pub struct DomainError(pub f64);

/// Requested handover conflicts with the current DRRM state.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidTransition {
    #[error("a vertical handover is already in progress")]
    VhoInProgress,
    #[error("target RAT is already active")]
    AlreadyActive,
}

/// Failure while executing a simulation run.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

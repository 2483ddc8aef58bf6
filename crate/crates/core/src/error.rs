use std::path::PathBuf;

/// Errors produced across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Scenario validation failures, one message per violated invariant.
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    InvalidScenario(Vec<String>),

    #[error("integration diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

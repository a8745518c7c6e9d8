//! Crate-wide error type.
//!
//! Configuration problems carry the path of the offending field so the CLI
//! can report `config.joint.reduction_ratio: must be positive` and exit with
//! the dedicated invalid-config code.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration field failed validation. `path` is dot-separated.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    /// A state or signal value became non-finite during simulation.
    #[error("non-finite value in `{field}`")]
    NonFinite { field: &'static str },

    /// Optimization diverged (NaN/inf loss).
    #[error("optimization diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    /// Malformed artifact file (CSV/JSON produced by another stage).
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Files a validation error under an enclosing config section, extending
    /// the dotted path.
    pub fn under(self, section: &str) -> Self {
        match self {
            Error::InvalidInput(message) => Error::Config {
                path: section.into(),
                message,
            },
            Error::Config { path, message } => Error::Config {
                path: format!("{section}.{path}"),
                message,
            },
            other => other,
        }
    }
}

use thiserror::Error;

use crate::stg::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed document. `path` is a field path (`states[2].root.kind`) or
    /// `line:column` for syntax errors.
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("unsupported document version {found:?} (expected {expected:?})")]
    Version {
        found: String,
        expected: &'static str,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("conflicting state payloads for ids: {}", .0.join(", "))]
    Conflict(Vec<String>),

    #[error("unknown state {0:?}")]
    UnknownState(String),

    #[error("state {0:?} already exists")]
    DuplicateState(String),

    #[error("action {action:?} is not available from state {state:?}")]
    InvalidAction { action: String, state: String },

    #[error("{targets} reachable targets exceed the exact planning capacity of {capacity}; use the scalable planner")]
    Capacity { targets: usize, capacity: usize },

    #[error("graph has {states} states, oracle capacity is {capacity}")]
    OracleCapacity { states: usize, capacity: usize },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn from_json(err: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let path = if path == "." || path.is_empty() {
            format!("{}:{}", inner.line(), inner.column())
        } else {
            path
        };
        Error::Parse {
            path,
            message: inner.to_string(),
        }
    }
}

//! Error taxonomy shared by every pipeline stage.
//!
//! Variants map onto the process exit codes used by the CLI: schema and
//! contract problems exit 2, backend and protocol problems exit 3, fixture
//! misses exit 4.

use crate::timeline::GlobalSpeakerId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input text (bad JSON syntax).
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Schema-valid input violating a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller broke an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A backend call failed (transport errors are retryable).
    #[error("backend error{}: {message}", failed_id.map(|id| format!(" for {id}")).unwrap_or_default())]
    Backend {
        message: String,
        retryable: bool,
        failed_id: Option<GlobalSpeakerId>,
    },

    /// A backend reply violated the wire contract; retrying cannot help.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Scripted mock had no entry for a request digest.
    #[error("fixture miss: no scripted response for request digest {digest}")]
    FixtureMiss { digest: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn backend(message: impl Into<String>, retryable: bool) -> Self {
        Error::Backend {
            message: message.into(),
            retryable,
            failed_id: None,
        }
    }

    /// Whether a retry has any chance of succeeding.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Backend { retryable: true, .. })
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Contract(_) | Error::Io { .. } => 2,
            Error::Backend { .. } | Error::Protocol(_) => 3,
            Error::FixtureMiss { .. } => 4,
        }
    }
}

pub(crate) fn io_err(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
    Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    }
}

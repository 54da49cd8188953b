use std::path::PathBuf;

use thiserror::Error;

use crate::backends::Capability;

/// Errors surfaced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{kind} not found: {id}")]
    NotFound { kind: &'static str, id: String },

    /// A stage was invoked before the stage producing its inputs.
    #[error("missing {path}: run `{stage}` first")]
    MissingPrerequisite { stage: &'static str, path: PathBuf },

    #[error("backend `{backend}` does not provide the `{capability}` capability")]
    Capability {
        backend: String,
        capability: Capability,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("malformed thread {thread_id}: {reason}")]
    Structure { thread_id: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

/// Failure of a model backend (usually an external adapter process).
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("adapter handshake failed: {0}")]
    Handshake(String),

    #[error("adapter protocol version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u64, found: u64 },

    #[error("malformed adapter response: {0}")]
    MalformedResponse(String),

    #[error("adapter request {id} timed out after {seconds:.1}s")]
    Timeout { id: u64, seconds: f64 },

    #[error("adapter request {id} failed: {message}")]
    Remote { id: u64, message: String },

    #[error("adapter transport failure: {0}")]
    Transport(String),

    /// A batch of posts could not be labeled. Labels produced before the
    /// failure are returned in `processed`.
    #[error("classification failed for {} posts: {source}", failed_ids.len())]
    Batch {
        failed_ids: Vec<String>,
        processed: Vec<crate::backends::ArgumentLabel>,
        #[source]
        source: Box<BackendError>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

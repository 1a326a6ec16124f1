use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure reported by an embedding or completion provider.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    /// Transient failure; the caller may retry the same batch.
    #[error("retriable provider failure: {message} ({} inputs in batch)", batch.len())]
    Retriable { message: String, batch: Vec<String> },
    /// Misconfiguration or a permanent rejection.
    #[error("fatal provider failure: {0}")]
    Fatal(String),
}

impl ProviderError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ProviderError::Retriable { .. })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access snapshot root {path}: {source}")]
    SnapshotAccess {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path} line {line}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("malformed diff at hunk `{header}`: {message}")]
    DiffParse { header: String, message: String },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("embedding failed for units: {}", failed_unit_ids.join(", "))]
    PartialIndexFailure {
        failed_unit_ids: Vec<String>,
        first_error: ProviderError,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate vector: {0}")]
    DegenerateVector(String),
    #[error("degenerate text: no tokens")]
    DegenerateText,
    #[error("non-finite numeric input: {0}")]
    NumericInput(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("window holds {len} candidates but the limit is {max}")]
    WindowSize { len: usize, max: usize },
    #[error("prompt budget unsatisfiable: needs at least {minimum_total} tokens, limit is {limit}")]
    Budget { minimum_total: usize, limit: usize },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("incomplete run, missing: {}", missing.join(", "))]
    IncompleteRun { missing: Vec<String> },
    #[error("index format error: {0}")]
    IndexFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

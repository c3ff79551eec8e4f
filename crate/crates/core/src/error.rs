use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("example {id}: {source}")]
    Example {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("report error: {0}")]
    Report(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the id of the example being processed.
    pub fn in_example(self, id: &str) -> Self {
        match self {
            e @ Error::Example { .. } => e,
            other => Error::Example {
                id: id.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with example context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Example { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_data_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Parse { .. } | Error::Schema(_) | Error::Split(_) | Error::Io { .. }
        )
    }

    pub fn is_backend_error(&self) -> bool {
        matches!(self.root(), Error::Backend(_))
    }
}

/// Failure of a masked language model backend.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: usize },
    #[error("backend returned HTTP status {0}")]
    Status(u16),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("invalid log-probability {value} for query {query}, word {word}")]
    InvalidValue { query: usize, word: usize, value: f64 },
    #[error("bad backend request: {0}")]
    Request(String),
}

impl BackendError {
    /// Only transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

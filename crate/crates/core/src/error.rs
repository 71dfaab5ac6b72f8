use std::path::PathBuf;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates a documented bound (k, M, dimensions, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A mathematical precondition failed (e.g. zero in a KL reference).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A text input could not be parsed; `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A model file is structurally invalid.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported model format_version {found}; supported versions: {supported:?}")]
    Version { found: u64, supported: Vec<u64> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

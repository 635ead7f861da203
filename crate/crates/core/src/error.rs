use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conflict: {0}")]
    Conflict(String),

    /// A line-oriented input could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid label at line {line}: {label:?}")]
    InvalidLabel { line: usize, label: String },

    /// Remote call failed after exhausting the retry budget.
    #[error("transport error after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },

    #[error("index build aborted after embedding {completed}/{total} chunks: {source}")]
    IndexBuild {
        completed: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run {mnemonic} aborted: {failed}/{total} items failed")]
    RunAborted {
        mnemonic: String,
        failed: usize,
        total: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a remote endpoint rather than by the input.
    pub fn is_transport(&self) -> bool {
        match self {
            Error::Transport { .. } => true,
            Error::IndexBuild { source, .. } => source.is_transport(),
            _ => false,
        }
    }
}

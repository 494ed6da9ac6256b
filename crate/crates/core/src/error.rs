//! Error type shared by all toolkit modules.

use std::path::Path;
use thiserror::Error;

/// Toolkit-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A requested region falls outside the available data.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// A request would exceed a configured resource budget.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// A pipeline stage received no usable samples.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingFailure { epoch: usize, detail: String },

    /// A text input (manifest, pair list, CSV) failed to parse.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// An I/O operation failed; the path is always named.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A binary artifact carries an unsupported format version.
    #[error("incompatible format version in {path}: found {found}, expected {expected}")]
    FormatVersion {
        path: String,
        found: u32,
        expected: u32,
    },

    /// A binary artifact is structurally malformed.
    #[error("bad file format in {path}: {msg}")]
    Format { path: String, msg: String },

    /// A command needs an artifact from an earlier pipeline step.
    #[error("missing artifact for step '{step}': {path}")]
    MissingArtifact { step: String, path: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-uniform {axis} grid: {message}")]
    GridUniformity { axis: &'static str, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The likelihood carries no information about the location parameter.
    #[error("estimation unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("unestimable error metric: {0}")]
    Unestimable(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Attach a file name to an error raised while reading that file.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Io { .. } | Error::File { .. } => self,
            other => Error::File {
                path: path.into(),
                message: other.to_string(),
            },
        }
    }
}

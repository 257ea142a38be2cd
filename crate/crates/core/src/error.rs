use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncation { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("window of {window} columns does not fit a curve of width {width}")]
    Window { window: usize, width: usize },

    #[error("loss is undefined: {0}")]
    UndefinedLoss(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("localization error is undefined: no jointly valid A-scans")]
    NoJointlyValid,

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

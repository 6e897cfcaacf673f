use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    #[error("simulation error: spectral response channel {channel} has no overlap with the cube wavelengths")]
    Simulation { channel: usize },

    #[error("training error: non-finite value in parameter `{param}`")]
    Training { param: String },

    #[error("training diverged: non-finite loss at step {step}")]
    Diverged { step: u64 },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("extraction error: {0}")]
    Extraction(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

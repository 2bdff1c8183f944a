use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("loss must be a 1x1 scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite gradient for parameter {index}; optimizer step rejected")]
    NonFiniteGradient { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation diverged at t = {time} s ({detail})")]
    SimulationDiverged { time: f64, detail: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("every restart produced a non-finite loss for sample {sample}")]
    AllRestartsFailed { sample: usize },

    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("truncated or oversized data file {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("checksum mismatch for {path}: manifest {expected:016x}, computed {actual:016x}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. }
                | Error::SimulationDiverged { .. }
                | Error::NonFiniteLoss { .. }
                | Error::AllRestartsFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

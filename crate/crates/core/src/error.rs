use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the fusion stack.
#[derive(Debug, Error)]
pub enum AsfError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty key set: no sensor is available for cross-attention")]
    EmptyKeys,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    /// Raised by channel-concatenation fusion when the sensor set differs from
    /// the one the downstream head was built for.
    #[error("fused-width mismatch: head expects {expected} channels, concatenation produced {actual}")]
    FusedWidthMismatch { expected: usize, actual: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checkpoint incompatible with configuration:\n{0}")]
    Incompatible(String),

    #[error("loss became non-finite at step {step}; last good checkpoint: {last_good}")]
    NanLoss { step: u64, last_good: String },
}

pub type Result<T> = std::result::Result<T, AsfError>;

impl AsfError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AsfError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        AsfError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            AsfError::Config(_) | AsfError::Incompatible(_) => 1,
            AsfError::NanLoss { .. } => 3,
            _ => 2,
        }
    }
}

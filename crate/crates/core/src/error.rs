use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NovaError>;

#[derive(Debug, Error)]
pub enum NovaError {
    /// Caller supplied arguments that violate an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pixel ({x}, {y}) is outside the {width}x{height} image")]
    PixelOutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("point is behind camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("missing depth for {count} masked pixel(s) of object {object}")]
    MissingDepth { object: usize, count: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("no supervision available: {0}")]
    NoSupervision(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents are malformed.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl NovaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NovaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        NovaError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            NovaError::InvalidInput(_)
            | NovaError::PixelOutOfBounds { .. }
            | NovaError::BehindCamera { .. }
            | NovaError::Config(_) => 1,
            NovaError::Io { .. }
            | NovaError::Format { .. }
            | NovaError::MissingDepth { .. }
            | NovaError::NoSupervision(_)
            | NovaError::CheckpointMismatch(_) => 2,
            NovaError::NonFinite(_) | NovaError::VerifyFailed(_) => 3,
        }
    }
}

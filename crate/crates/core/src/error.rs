use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation is not orthonormal with determinant +1 (deviation {deviation:.3e})")]
    InvalidRotation { deviation: f64 },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {h}x{w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        h: usize,
        w: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no overlapping valid pixels")]
    NoOverlap,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("denoiser protocol error: {0}")]
    Protocol(String),

    #[error("denoiser endpoint returned error {code}: {message}")]
    Remote { code: u16, message: String },

    #[error("denoiser transport error (retriable): {0}")]
    Transport(String),

    #[error("denoiser output shape mismatch: {0}")]
    ShapeMismatch(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for failures that originate in a denoiser or its wire protocol.
    pub fn is_denoiser_error(&self) -> bool {
        matches!(
            self,
            Error::Protocol(_) | Error::Remote { .. } | Error::Transport(_) | Error::ShapeMismatch(_)
        )
    }

    /// True for transport-level failures that can be retried on a fresh connection.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Operand shapes do not conform for an op.
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A tensor held or produced a NaN/Inf value.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// An argument violated a documented precondition.
    #[error("{0}")]
    InvalidArg(String),

    /// backward() reached no gradient for a parameter that adam_step needs.
    #[error("no gradient for parameter '{path}'")]
    MissingGrad { path: String },

    /// Training loss became non-finite.
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// On-disk artifact is malformed, truncated, or has the wrong version.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidArg(msg.into())
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        CoreError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

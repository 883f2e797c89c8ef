use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numeric pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// Operand dimensions do not satisfy the operation's contract.
    ShapeMismatch { op: &'static str, detail: String },
    /// An argument is outside its allowed range.
    InvalidArg { op: &'static str, detail: String },
    /// A forward or backward pass produced NaN or infinity.
    NonFinite { op: &'static str },
    /// backward() was called again without re-recording the graph.
    BackwardConsumed,
    /// backward() was called on a non-scalar node.
    NonScalarRoot { numel: usize },
    /// A configuration string or structure failed to parse or validate.
    Config { detail: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, detail } => {
                write!(f, "shape mismatch in {op}: {detail}")
            }
            CoreError::InvalidArg { op, detail } => write!(f, "invalid argument to {op}: {detail}"),
            CoreError::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            CoreError::BackwardConsumed => {
                write!(f, "backward() called twice on the same recording")
            }
            CoreError::NonScalarRoot { numel } => {
                write!(f, "backward() root must be scalar, got {numel} elements")
            }
            CoreError::Config { detail } => write!(f, "bad configuration: {detail}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type CoreResult<T> = Result<T, CoreError>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> CoreResult<T> {
    Err(CoreError::ShapeMismatch { op, detail: detail.into() })
}

pub(crate) fn arg_err<T>(op: &'static str, detail: impl Into<String>) -> CoreResult<T> {
    Err(CoreError::InvalidArg { op, detail: detail.into() })
}

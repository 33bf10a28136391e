use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An op received operands whose shapes do not conform.
    Shape { op: &'static str, detail: String },
    /// Backward was asked for a root that is not a scalar.
    NonScalarRoot { shape: alloc::vec::Vec<usize> },
    /// A gradient or loss term became NaN/infinite.
    NonFinite { what: String },
    /// A caller-supplied argument is outside its valid range.
    InvalidArgument(String),
    /// A named lookup (world, param, ...) failed.
    Unknown { kind: &'static str, name: String, valid: String },
    /// Training diverged.
    Diverged { step: usize, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape mismatch in `{op}`: {detail}"),
            Error::NonScalarRoot { shape } => {
                write!(f, "backward root must be scalar, got shape {shape:?}")
            }
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Unknown { kind, name, valid } => {
                write!(f, "unknown {kind} `{name}` (valid: {valid})")
            }
            Error::Diverged { step, detail } => {
                write!(f, "training diverged at step {step}: {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("index {index} out of range for size {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("hamming distance is undefined for winner-take-all codes")]
    NotBitCode,
    #[error("operation requires a {expected} hash function")]
    WrongFamily { expected: &'static str },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("output column {0} is not held locally")]
    MissingColumn(usize),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

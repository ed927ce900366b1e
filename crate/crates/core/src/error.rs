use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor, volume or matrix dimensions do not agree.
    Shape(String),
    /// A scalar argument or score is outside its valid range.
    OutOfRange(String),
    /// Not enough samples, classes or subjects for the requested operation.
    InsufficientData(String),
    /// Data is degenerate for the operation (zero variance, empty region, ...).
    Degenerate(String),
    /// A backward pass was requested without the intermediates it needs.
    MissingCache(&'static str),
    /// A subject from a held-out fold reached a fitting routine.
    Leakage(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::OutOfRange(msg) => write!(f, "out of range: {msg}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::MissingCache(what) => write!(f, "missing forward cache: {what}"),
            Error::Leakage(msg) => write!(f, "train/test leakage: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the container reader. Each corruption mode has its own
/// variant so callers (and tests) can tell them apart.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes {found:?} (expected \"RALM\")")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: need {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("header/payload mismatch: {0}")]
    Mismatch(String),
    #[error("expected a {expected:?} container, found {found:?}")]
    WrongKind { expected: String, found: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cell index ({row}, {col}) outside a {rows}x{cols} grid")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("point ({x}, {y}) lies outside the grid bounds")]
    OutOfDomain { x: f64, y: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no information: {0}")]
    NoInformation(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("csv row {row}: {message}")]
    CsvRow { row: usize, message: String },

    #[error("csv row {row}: position ({x}, {y}) outside cabin bounds")]
    CsvOutOfBounds { row: usize, x: f64, y: f64 },

    #[error("config parse error: {0}")]
    Parse(String),
}

/// Coarse classification used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Divergence { .. } | Error::NonFiniteGradient(_) | Error::NoInformation(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

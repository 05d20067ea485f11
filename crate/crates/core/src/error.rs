//! Error type shared across the crate.

use std::fmt;

/// Errors produced by dataset handling, model construction, and training.
#[derive(Debug)]
pub enum Error {
    /// A membership-function argument or shape parameter is outside its domain.
    Domain(String),
    /// Vector/matrix dimensions do not agree.
    DimensionMismatch { expected: usize, actual: usize, what: &'static str },
    /// Invalid configuration (k out of range, empty dataset, bad split, ...).
    Config(String),
    /// Both type-reduction weights are zero; the reduction weight is undefined.
    DegenerateWeights,
    /// A data file could not be parsed; row/column are 1-based where known.
    Csv { path: String, row: Option<usize>, column: Option<usize>, message: String },
    /// A column cannot be normalized (constant under min-max, zero variance under z-score).
    ConstantColumn { column: usize },
    /// Training diverged: validation error exploded past the abort threshold.
    Divergence { initial_rmse: f64, current_rmse: f64 },
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::DimensionMismatch { expected, actual, what } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, got {actual}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::DegenerateWeights => {
                write!(f, "type-reduction weights v1 and v2 are both zero")
            }
            Error::Csv { path, row, column, message } => {
                write!(f, "csv error in {path}")?;
                if let Some(r) = row {
                    write!(f, ", row {r}")?;
                }
                if let Some(c) = column {
                    write!(f, ", column {c}")?;
                }
                write!(f, ": {message}")
            }
            Error::ConstantColumn { column } => {
                write!(f, "column {column} is constant and cannot be normalized")
            }
            Error::Divergence { initial_rmse, current_rmse } => write!(
                f,
                "training diverged: validation RMSE {current_rmse:e} exceeds 1e6 x initial {initial_rmse:e}"
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

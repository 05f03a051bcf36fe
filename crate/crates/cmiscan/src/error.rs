//! Crate-wide error type.
//!
//! Everything fallible in the crate returns [`Result`]; the CLI maps the
//! variants onto process exit codes (input problems exit 2, anything
//! unexpected exits 1).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of statistics, thresholds, simulation, and parsing.
#[derive(Debug, Error)]
pub enum Error {
    /// Covariate dimension outside the supported range {1, 2}.
    #[error("unsupported covariate dimension {0}: supported dimensions are 1 and 2")]
    UnsupportedDimension(usize),

    /// All points identical (one dimension) or no hull area (two).
    #[error("degenerate covariate support: {0}")]
    DegenerateSupport(String),

    /// Truncation parameter inconsistent with the rule or the data.
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),

    /// The extreme-value constants need vol / t_n^d > 1.
    #[error("truncation too coarse for the extreme-value approximation: {0}")]
    TruncationTooCoarse(String),

    /// The refined tail equation has no root at this level.
    #[error("refined critical value unavailable: {0}")]
    RefinedUnavailable(String),

    /// Multiplier covariance matrix not positive definite at some point.
    #[error("multiplier covariance is not positive definite at observation {index}")]
    InvalidCovariance {
        /// Row index (0-based, original data order) of the offending point.
        index: usize,
    },

    /// Malformed data: shape mismatches, non-finite values, missing columns.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Inconsistent run configuration (levels, grids, counts, flags).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// CSV syntax or value problem, with its 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse {
        /// 1-based line number in the input file (the header is line 1).
        line: u64,
        /// What went wrong on that line.
        message: String,
    },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A bug: states that should be unreachable with validated inputs.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code for the CLI: 2 for anything traceable to user
    /// input or configuration, 1 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 1,
            _ => 2,
        }
    }
}

impl From<csv::Error> for Error {
    /// Used on the write side; readers map CSV problems to line-aware
    /// [`Error::Parse`] values before `?` can reach this conversion.
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!("is_io_error guarantees an Io kind"),
            }
        } else {
            Error::Internal(format!("csv write failed: {e}"))
        }
    }
}

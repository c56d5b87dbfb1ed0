use std::path::PathBuf;

use renyi_ot::OtError;
use thiserror::Error;

/// Problems with input files.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: cannot read: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    LengthMismatch { path: PathBuf, message: String },
    #[error("{path}: similarity block is not square ({rows} rows, {cols} columns)")]
    NonSquare { path: PathBuf, rows: usize, cols: usize },
    #[error("{path}: score {value} for ({row}, {col}) is outside [0, 100]")]
    OutOfRangeScore {
        path: PathBuf,
        row: String,
        col: String,
        value: f64,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: OtError,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("invalid input: {0}")]
    Data(OtError),
    #[error("solver failed: {0}")]
    Solver(OtError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    /// Process exit status: 2 usage, 3 data or I/O, 4 solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Ingest(_) | Self::Data(_) | Self::Output { .. } => 3,
            Self::Solver(_) => 4,
        }
    }
}

impl From<OtError> for CliError {
    fn from(e: OtError) -> Self {
        match e {
            OtError::MaxSweepsExceeded { .. }
            | OtError::NumericalUnderflow
            | OtError::InnerProjectionFailure { .. }
            | OtError::ZeroGradient
            | OtError::InfeasibleDuals { .. }
            | OtError::BisectionFailure { .. }
            | OtError::MarginalViolation { .. } => Self::Solver(e),
            OtError::InvalidConfig(_)
            | OtError::AlphaOutOfRange(_)
            | OtError::QOutOfRange(_)
            | OtError::InvalidRegularizer(_) => Self::Usage(e.to_string()),
            other => Self::Data(other),
        }
    }
}

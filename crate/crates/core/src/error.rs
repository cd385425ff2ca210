use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("level {level} out of range {min}..={max}")]
    LevelOutOfRange { level: usize, min: usize, max: usize },
    #[error("coefficients were produced by a different tree")]
    ProvenanceMismatch,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("eigensolver did not converge (max residual {residual:.3e})")]
    EigenSolver { residual: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short stable tag used for machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidTree(_) => "invalid-tree",
            Error::InvalidInput(_) => "invalid-input",
            Error::MissingInput(_) => "missing-input",
            Error::LevelOutOfRange { .. } => "level-out-of-range",
            Error::ProvenanceMismatch => "provenance-mismatch",
            Error::Parse { .. } => "parse",
            Error::EigenSolver { .. } => "eigensolver",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

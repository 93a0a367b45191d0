//! Error taxonomy shared by every module.
//!
//! The CLI maps these onto exit codes: [`Error::Numeric`] is exit 3, all
//! other variants are exit 2 (bad input of one kind or another).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain (df <= 0, |rho| >= 1, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Matrix/vector dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input data is unusable (non-finite cells, missing files, bad CSV).
    #[error("data error: {0}")]
    Data(String),

    /// The requested design is statistically invalid (group too small, empty
    /// kernel list, alternative that silently equals the null).
    #[error("design error: {0}")]
    Design(String),

    /// All pairwise distances are zero; the bandwidth heuristic is undefined.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Label rows do not align 1:1 with data rows.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A numerical routine failed to meet its accuracy contract.
    #[error("numeric error: {message}")]
    Numeric {
        message: String,
        worst_residual: Option<f64>,
    },

    /// A Monte Carlo replication failed; the index is attached.
    #[error("replication {index} failed: {source}")]
    Replication { index: usize, source: Box<Error> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric {
            message: message.into(),
            worst_residual: None,
        }
    }

    pub(crate) fn numeric_with_residual(message: impl Into<String>, residual: f64) -> Self {
        Error::Numeric {
            message: message.into(),
            worst_residual: Some(residual),
        }
    }

    /// True for failures of numerical routines (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric { .. } => true,
            Error::Replication { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

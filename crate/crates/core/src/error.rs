use thiserror::Error;

use crate::qstate::DensityMatrix;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("trace is {trace}, expected 1")]
    BadTrace { trace: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("expected a {expected} matrix, got {rows}x{cols}")]
    Shape {
        expected: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("ket is not normalised (norm {norm})")]
    NotNormalised { norm: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("spectral grids have mismatched axes")]
    GridMismatch,

    #[error("spectral amplitude grid is identically zero")]
    ZeroGrid,

    #[error("no counts recorded in basis {basis}")]
    EmptyBasis { basis: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("reconstruction did not converge after {iterations} iterations (residual {objective:.3e})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        best: Box<DensityMatrix>,
    },

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

use thiserror::Error;

use crate::linalg::SquareMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix side {0} is odd; a phase-space matrix needs an even side")]
    OddDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular (pivot magnitude {pivot:.3e})")]
    Singular { pivot: f64 },

    #[error("matrix is exceptional: |det(I + M)| = {det:.3e} is within tolerance")]
    Exceptional { det: f64 },

    #[error("one-form is not exact for the target symplectic form (max residual {max:.3e})")]
    NotExact { residual: SquareMatrix, max: f64 },

    #[error("matrix is not symmetric (max asymmetry {max:.3e})")]
    NotSymmetric { max: f64 },

    #[error("product form is incompatible: diagonal blocks differ or off-diagonal block is asymmetric (residual {max:.3e})")]
    Incompatible { max: f64 },

    #[error("matrix is not Hamiltonian (residual {max:.3e})")]
    NotHamiltonian { max: f64 },

    #[error("matrix is not symplectic (residual {max:.3e})")]
    NotSymplectic { max: f64 },

    #[error("state outside the domain of {system}: {reason}")]
    DomainError { system: String, reason: String },

    #[error("implicit solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        residual: f64,
        iterations: usize,
        iterate: Vec<f64>,
    },

    #[error("system {0} has no separable splitting")]
    NotSeparable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("malformed document: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

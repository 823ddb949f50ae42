use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max |M - M^dagger| = {0:.3e})")]
    NotHermitian(f64),

    #[error("trace {0} is not 1")]
    TraceNotOne(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("basis vectors are not orthonormal (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("ket norm {0} is not 1")]
    NotNormalized(f64),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("transition indices must differ, got {0} twice")]
    EqualIndices(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Kraus operators violate completeness (largest eigenvalue of sum K^dagger K is {0:.12})")]
    Completeness(f64),

    #[error("self-testing assumptions not met (largest residual {0:.3e})")]
    AssumptionsNotMet(f64),

    #[error("malformed state file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

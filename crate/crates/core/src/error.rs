use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the decomposition library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("cube with l = {l} does not fit in a torus of side {side} (need l - 1 < side)")]
    CubeTooLarge { l: usize, side: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coefficient map is not symmetric: |A[{row}][{col}] - A[{col}][{row}]| = {deviation:e}")]
    NotSymmetric { row: usize, col: usize, deviation: f64 },

    #[error("coefficient map is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("symbol is numerically singular (condition number {condition:e})")]
    SingularSymbol { condition: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("|z| = {modulus} lies outside the open unit disc")]
    OutsideDisc { modulus: f64 },

    #[error("inadmissible complex path: {0}")]
    InadmissiblePath(String),

    #[error("reconstructed kernel has imaginary residue {residue:e} above tolerance {tolerance:e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    #[error("derivative order {order} exceeds the configured maximum {max}")]
    OrderTooHigh { order: usize, max: usize },

    #[error("the projector symbol is undefined at p = 0")]
    ZeroFrequency,

    #[error("stiffness factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("problem size {size} exceeds the dense oracle limit {limit}")]
    TooLargeForOracle { size: usize, limit: usize },

    #[error("invalid cube schedule: {0}")]
    InvalidSchedule(String),

    #[error("far region beyond range {range} is empty")]
    EmptyFarRegion { range: i64 },

    #[error("need at least two non-skipped scales for slope fitting, have {available}")]
    InsufficientScales { available: usize },

    #[error("contour integral did not converge (relative change {change:e} under node doubling, tolerance {tolerance:e})")]
    NotConverged { change: f64, tolerance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("config validation error at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

/// Errors raised by the hybrid dynamics library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |A - A^dagger| = {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("state is not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for a {axes}-axis domain")]
    AxisOutOfRange { axis: usize, axes: usize },

    #[error("derivative order {0} not supported (1..=4)")]
    UnsupportedOrder(usize),

    #[error("field domains do not match")]
    DomainMismatch,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density below floor in {cells} cells and regularization is disabled")]
    BelowFloor { cells: usize },

    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix of dimension {dim} is not positive definite after jitter")]
    NotPositiveDefinite { dim: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("CDF tolerance {requested:.1e} not reached within {evaluations} integrand evaluations (achieved {achieved:.3e})")]
    CdfTolerance {
        requested: f64,
        achieved: f64,
        evaluations: usize,
    },

    #[error("variance {value:.3e} of coordinate {index} is below the jitter floor")]
    BelowJitterFloor { index: usize, value: f64 },

    #[error("gradient requested at design point {index}, where the kernel is not twice differentiable")]
    NonSmoothPoint { index: usize },

    #[error("point coincides with design point {index} (distance {distance:.3e})")]
    DuplicatePoint { index: usize, distance: f64 },

    #[error("batch rows {first} and {second} are closer than the dedup tolerance")]
    DuplicateBatchRows { first: usize, second: usize },

    #[error("degenerate beta schedule: beta = {beta:.6e} must be positive")]
    DegenerateSchedule { beta: f64 },

    #[error("non-finite objective or gradient at the starting point")]
    NonFiniteStart,

    #[error("all {starts} starts failed: {reason}")]
    AllStartsFailed { starts: usize, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared by all estimation and simulation routines.

use crate::model::ValidationReport;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Model parameters failed validation; the report lists every violation.
    #[error("invalid model parameters:\n{0}")]
    InvalidModel(ValidationReport),

    /// A scalar argument fell outside its admissible interval.
    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// Matrix shapes do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An experiment or instance configuration is unusable.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input matrix expected to be symmetric was not, beyond tolerance.
    #[error("matrix is not symmetric (max deviation {max_dev:.3e})")]
    NotSymmetric { max_dev: f64 },

    /// The input does not contain enough structure for the algorithm,
    /// e.g. fewer numerically distinct simplex vertices than requested.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The vertex submatrix selected by vertex hunting is too ill-conditioned
    /// to invert reliably.
    #[error("vertex submatrix is ill-conditioned (condition number {condition:.3e})")]
    VertexDegeneracy { condition: f64 },

    /// The membership Gram matrix is (numerically) rank deficient, so the
    /// item-parameter regression cannot be solved.
    #[error("membership matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    /// Exhaustive permutation search is capped to keep metric evaluation cheap.
    #[error("permutation search supports at most {max} classes, got {k}")]
    TooManyClasses { k: usize, max: usize },

    /// Relative-error denominator is zero.
    #[error("zero denominator in relative error")]
    ZeroDenominator,

    /// An aggregate operation received an empty collection.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

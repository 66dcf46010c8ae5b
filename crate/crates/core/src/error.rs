use thiserror::Error;

/// Errors raised by kernel evaluation, assembly and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("kernel evaluated on the singular lattice set (t = 0, x in qZ^n)")]
    LatticeSingular,

    #[error("lattice sum did not reach tail tolerance {tail_tol:e} within {max_shell} shells")]
    TruncationFailed { tail_tol: f64, max_shell: usize },

    #[error("point outside the validity neighbourhood of the remainder kernel (|x| = {norm}, limit {limit})")]
    OutsideValidity { norm: f64, limit: f64 },

    #[error("boundary map rejected: {0}")]
    InvalidMap(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("singular diagonal block (condition estimate {condition:e})")]
    SingularBlock { condition: f64 },

    #[error("target {index} lies within {distance:e} of the boundary (safety radius {radius:e})")]
    TooCloseToBoundary {
        index: usize,
        distance: f64,
        radius: f64,
    },

    #[error("target {index} is not in the {expected} region")]
    RegionMismatch { index: usize, expected: &'static str },

    #[error("boundary-limit extrapolation failed at slab {slab}, node {node}")]
    ExtrapolationFailed { slab: usize, node: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidInput {
        field,
        reason: reason.into(),
    }
}

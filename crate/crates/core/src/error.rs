use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension N = {0} is outside the supported range 3..=6")]
    InvalidDimension(i64),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),

    #[error(
        "grid window too narrow: decay rate {kappa:.4} reaches only e^-{reach:.2} at the edges \
         (need e^-{required}); widen the window"
    )]
    RefinementRequired { kappa: f64, reach: f64, required: f64 },

    #[error("radius must be strictly positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("state cannot be projected onto the Nehari manifold: {0}")]
    NotProjectable(String),

    #[error("state is off the Nehari manifold: |psi| = {psi:.3e} exceeds {tol:.3e}")]
    OffManifold { psi: f64, tol: f64 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("scenario key `{key}`: {reason}")]
    Parse { key: String, reason: String },

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter { name, reason: reason.into() }
    }

    pub fn parse(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Parse { key: key.into(), reason: reason.into() }
    }
}

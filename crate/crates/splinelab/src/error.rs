use std::path::PathBuf;
use thiserror::Error;

/// Errors surfaced by kernel assembly, solvers, sampling and the study runner.
#[derive(Debug, Error)]
pub enum SplineError {
    #[error("empty point list")]
    EmptyPoints,

    #[error("elements live on different spaces: order {left} vs {right}")]
    SpaceMismatch { left: usize, right: usize },

    #[error("design points {i} and {j} coincide (|{a} - {b}| < 1e-12)")]
    DuplicateKnots { i: usize, j: usize, a: f64, b: f64 },

    #[error("{distinct} distinct design points, need at least {required}")]
    TooFewPoints { distinct: usize, required: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SplineError>;

impl SplineError {
    /// True for errors that indicate a bad plan or bad input rather than a
    /// failure during execution. The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SplineError::EmptyPoints
                | SplineError::SpaceMismatch { .. }
                | SplineError::TooFewPoints { .. }
                | SplineError::InvalidDensity(_)
                | SplineError::InvalidParameter(_)
                | SplineError::Config { .. }
        )
    }
}

//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A shape or length contract was violated at an API boundary.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An input left the mathematical domain an operation requires.
    #[error("domain violation in {context}: {message}")]
    Domain {
        context: &'static str,
        message: String,
    },

    /// A forward/backward pass produced a non-finite intermediate value.
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    /// A parameter update produced a non-finite coordinate.
    #[error("non-finite parameter at index {index}")]
    NonFiniteParam { index: usize },

    /// A training run hit a non-finite loss and was aborted.
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty example stream")]
    EmptyStream,

    /// Diagonal preconditioner has a zero entry.
    #[error("zero preconditioner denominator at parameter index {index}")]
    SingularPreconditioner { index: usize },

    /// Gradient too small to define a normalized direction or norm gradient.
    #[error("degenerate gradient: norm {norm} below threshold")]
    DegenerateGradient { norm: f64 },

    /// Malformed binary dataset file.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

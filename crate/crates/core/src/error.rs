use thiserror::Error;

/// Errors raised by the quantization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("total masses differ: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("cannot sample from a signed measure (negative weight {0})")]
    SignedMeasureSampling(f64),

    /// Carries the last quantizer state whose loss was finite.
    #[error("optimizer diverged at iteration {iteration}: non-finite loss")]
    Divergence {
        iteration: usize,
        last_points: Vec<Vec<f64>>,
        last_weights: Vec<f64>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

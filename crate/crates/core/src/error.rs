//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter range, mismatched model kinds).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix dimensions do not conform.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    /// Channel realization is (numerically) rank deficient.
    #[error("singular channel: |R[{index},{index}]| = {diag} below threshold")]
    SingularChannel { index: usize, diag: f64 },

    /// A requested discrete support exceeds the configured memory cap.
    #[error("size error: {requested} mass points exceeds cap of {cap}")]
    SizeCap { requested: usize, cap: usize },

    /// Gaussian receiver fit failed (e.g. an empty conditional bin).
    #[error("gaussian fit error: {0}")]
    GaussianFit(String),

    /// Training loss became non-finite.
    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    /// Malformed file contents (checkpoint, CSV).
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

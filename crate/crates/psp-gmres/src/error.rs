use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("preconditioner is singular or factorization failed: {0}")]
    SingularPreconditioner(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("Arnoldi breakdown: degenerate Hessenberg column {column}")]
    Breakdown { column: usize },

    #[error("non-finite value encountered during solve at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("insufficient probe samples: need at least {needed}, have {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("regression design is rank deficient even with ridge")]
    RankDeficient,

    #[error("zero-variance regressor in boundary-row fit")]
    ZeroVariance,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

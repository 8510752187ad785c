use thiserror::Error;

use crate::gaussian_flows::GaussianMoments;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Cholesky or eigendecomposition failed (matrix not symmetric positive definite).
    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("degenerate kernel bandwidth (all pairwise distances vanish)")]
    DegenerateBandwidth,

    #[error("particle {particle} produced a non-finite update")]
    Divergence { particle: usize },

    #[error("moment flow integration failed at t = {t}: {reason}")]
    IntegrationFailure {
        t: f64,
        reason: String,
        last_valid: Box<GaussianMoments>,
    },

    #[error("truncation: {0}")]
    Truncation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for configuration/input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Context { source, .. } => source.exit_code(),
            Error::Config(_)
            | Error::Format(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::Unsupported(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

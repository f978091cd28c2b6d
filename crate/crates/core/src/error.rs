use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NicaError>;

#[derive(Debug, Error)]
pub enum NicaError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("non-finite gradient entry in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("singular or ill-conditioned matrix: {0}")]
    Singular(String),

    #[error("ill-conditioned Jacobian at evaluation point {point} (condition number {cond:.3e})")]
    IllConditionedPoint { point: usize, cond: f64 },

    #[error("non-finite function value at stencil corner ({x}, {y})")]
    NonFiniteStencil { x: f64, y: f64 },

    #[error("variability failure: smallest singular value is zero")]
    VariabilityFailure,

    #[error("classifier input contains a single class")]
    SingleClass,

    #[error("empty result table")]
    EmptyTable,

    #[error("failed to ingest {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl NicaError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        NicaError::InvalidInput(msg.into())
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(NicaError::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

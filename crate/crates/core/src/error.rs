use thiserror::Error;

use crate::glasso::GlassoSolution;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("scatter matrix is singular and the penalty is zero")]
    SingularScatter,

    #[error("graphical lasso did not converge after {sweeps} sweeps (KKT residual {residual:.3e})")]
    GlassoNotConverged {
        sweeps: usize,
        residual: f64,
        best: Box<GlassoSolution>,
    },

    #[error("observation {index} has zero density under every component")]
    ZeroResponsibility { index: usize },

    #[error("component {component} is degenerate (weight {weight:.3e})")]
    DegenerateComponent { component: usize, weight: f64 },

    #[error("skewness is unidentifiable for component {component}: location/skewness weights vanish")]
    DegenerateWeights { component: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no candidate model could be fitted: {0}")]
    NoSuccessfulFit(String),

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that a restart from a different initialisation can fix.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateComponent { .. }
                | Error::DegenerateWeights { .. }
                | Error::ZeroResponsibility { .. }
                | Error::NotPositiveDefinite(_)
                | Error::GlassoNotConverged { .. }
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

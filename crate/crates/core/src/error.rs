use thiserror::Error;

/// Errors produced by model construction, solves and estimator assembly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("coefficient lost ellipticity during solve (non-positive curvature encountered)")]
    EllipticityLost,

    #[error("catalog has no pair tensor for offset ({0}, {1})")]
    MissingOffset(i64, i64),

    #[error("degenerate control variate: Var[Y] = 0")]
    DegenerateControl,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

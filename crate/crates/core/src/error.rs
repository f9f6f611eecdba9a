use thiserror::Error;

/// Errors produced by model evaluation, estimation and inference.
#[derive(Debug, Error)]
pub enum AcarError {
    #[error("parameter {name} = {value} violates bound |{name}| <= {bound}")]
    ParameterOutOfBounds {
        index: usize,
        name: String,
        value: f64,
        bound: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite latent value at t = {t}, category {category}")]
    NonFiniteLatent { t: usize, category: usize },

    #[error("non-finite objective value")]
    NonFiniteObjective,

    #[error("{what} is numerically singular (condition number {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("no optimizer start converged (best objective {best_objective})")]
    NonConvergence { best_objective: f64 },

    #[error("vertex undefined: quadratic coefficient {0} is too close to zero")]
    DegenerateQuadratic(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AcarError>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("kernel matrix not positive definite at pivot {pivot}; increase the jitter")]
    IllConditionedKernel { pivot: usize },

    #[error("solver unstable at time step {step} (max |s| = {max_abs:e}); use a finer time grid")]
    SolverInstability { step: usize, max_abs: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("divergence at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(what: &str, expected: usize, got: usize) -> Error {
    Error::Shape(format!("{what}: expected {expected}, got {got}"))
}

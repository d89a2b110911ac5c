use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph with {requested} vertices exceeds the budget of {budget}")]
    OverBudget { requested: usize, budget: usize },

    #[error("vertex index {index} out of range for graph with {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },

    #[error("realization index {index} out of range (ensemble has {count})")]
    RealizationOutOfRange { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rejection sampler exceeded {0} attempts")]
    SamplingExhausted(usize),

    #[error("eigensolver did not converge (realization {realization:?})")]
    EigenNonConvergence { realization: Option<usize> },

    #[error("zero pivot in complex LDL^T factorization at step {0}")]
    SolverBreakdown(usize),

    #[error("ensembles are not coupled: {0}")]
    Uncoupled(String),

    #[error("outside the localization regime: {0}")]
    OutsideRegime(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

use thiserror::Error;

use crate::search::SearchTrace;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input data (dimensions, signs, non-finite entries, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was called on data that violates its contract
    /// (e.g. certification of a non-optimal solution).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The numerical eigenstructure could not be certified against the
    /// input matrix. Supply the structure explicitly instead.
    #[error(
        "ill-conditioned eigenstructure: reconstruction residual {residual:.3e} exceeds \
         {bound:.3e}; supply the eigenstructure explicitly"
    )]
    IllConditionedEigenstructure { residual: f64, bound: f64 },

    /// A perturbed matrix failed to come back real.
    #[error("realness violated: imaginary residual {residual:.3e} exceeds {bound:.3e}")]
    RealnessViolated { residual: f64, bound: f64 },

    /// The conic backend rejected the assembled program.
    #[error("solver setup failed: {0}")]
    SolverSetup(String),

    /// A solve that was required to be optimal was not.
    #[error("solve failed: status {status:?}")]
    SolveFailed { status: crate::program::SolveStatus },

    /// The bound search could not make progress; the trace records every
    /// probe up to the failure.
    #[error("search failed: {message}")]
    SearchFailed {
        message: String,
        trace: Box<SearchTrace>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

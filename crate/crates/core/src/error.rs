use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Model data is malformed or violates a structural assumption.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A Lyapunov/Sylvester operator is singular or the system is not stable.
    #[error("degenerate solver input: {0}")]
    SolverDegenerate(String),

    /// The decay-rate parameter lies outside the admissible window.
    #[error("alpha = {alpha} outside the admissible window (0, {upper})")]
    AlphaOutOfRange { alpha: f64, upper: f64 },

    /// No strictly feasible point could be constructed for an LMI problem.
    #[error("LMI problem infeasible: {0}")]
    InfeasibleLmi(String),

    /// An iteration failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

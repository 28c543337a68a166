use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised anywhere in the optimization pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A connected pair has a zero rate or zero speed with work to do.
    #[error("pair (user {user}, server {server}) cannot carry its workload")]
    InfeasiblePair { user: usize, server: usize },

    #[error("service-cost ratio undefined: cost is {cost}")]
    UndefinedRatio { cost: f64 },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (primal residual {primal_residual:e}, dual residual {dual_residual:e})")]
    NotConverged { iterations: usize, primal_residual: f64, dual_residual: f64 },

    #[error("rounding failed: {0}")]
    RoundingFailed(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}

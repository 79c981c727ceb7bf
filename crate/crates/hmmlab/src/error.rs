//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Result`]. Variants distinguish
//! the failure classes that callers are expected to branch on: configuration
//! problems (reject before any numerics run), assembly failures (a sampled
//! potential violated positivity), solver failures (CG did not converge), and
//! ensemble failures (too many invalid samples).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Error type for the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A function argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration text could not be parsed.
    #[error("config parse error at line {line}: {msg}")]
    ConfigParse {
        /// 1-based line number in the configuration text.
        line: usize,
        /// Description of the problem.
        msg: String,
    },

    /// A parsed configuration violated a validation rule.
    #[error("config validation error: {0}")]
    ConfigValidation(String),

    /// The sampled potential `q0 + q_ε` lost strict positivity at a
    /// quadrature point, so the bilinear form is not coercive.
    #[error("assembly failure: {0}")]
    AssemblyFailure(String),

    /// The conjugate-gradient solver did not reach the requested tolerance.
    #[error(
        "solver failure: relative residual {relative_residual:.3e} after {iterations} iterations"
    )]
    SolverFailure {
        /// Final relative residual ‖r‖/‖b‖.
        relative_residual: f64,
        /// Iterations performed.
        iterations: usize,
        /// Relative residual after each iteration.
        history: Vec<f64>,
    },

    /// More samples failed than the ensemble invalid-sample budget allows.
    #[error("ensemble failure: {0}")]
    EnsembleFailure(String),

    /// A requested computation exceeds a configured resource bound.
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

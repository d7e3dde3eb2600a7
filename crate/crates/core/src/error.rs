//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Iterative policy evaluation did not reach the requested tolerance
    /// within the iteration cap.
    #[error("evaluation diverged: residual {residual} after {iterations} iterations")]
    EvaluationDiverged { residual: f64, iterations: usize },

    /// Attempted to take the log of a zero probability where the quantity
    /// is not defined (e.g. soft advantage with pi(a|s) = 0 and tau > 0).
    #[error("log of zero probability at state {state}, action {action}")]
    LogOfZero { state: usize, action: usize },

    /// Action outside the open interval (-1, 1) passed to a squashed policy.
    #[error("action {0} out of range (-1, 1)")]
    ActionOutOfRange(f64),

    /// A density that should integrate to one did not, beyond tolerance.
    #[error("integration failure: density integrates to {0}")]
    IntegrationFailure(f64),

    /// Boltzmann densities require a strictly positive temperature.
    #[error("temperature {0} outside domain (must be > 0)")]
    TemperatureDomain(f64),

    /// KL divergence undefined: first argument has mass where the second is zero.
    #[error("kl undefined: p({index}) = {p} > 0 where q is zero")]
    KlUndefined { index: usize, p: f64 },

    /// Renyi divergence of order infinity requires matching supports.
    #[error("renyi undefined: support mismatch at index {0}")]
    RenyiUndefined(usize),

    /// kappa(t) is defined on (0, 1) union (1, inf).
    #[error("kappa domain error: t = {0}")]
    KappaDomain(f64),

    /// All importance weights underflowed to zero.
    #[error("degenerate importance weights (all zero)")]
    DegenerateWeights,

    /// The score function does not expose a derivative in the action.
    #[error("score function is not differentiable in the action")]
    NotDifferentiable,

    /// A gradient contained NaN or infinity.
    #[error("non-finite gradient at index {0}")]
    NanGradient(usize),

    /// Counterexample search exhausted its budget. Indicates a bug or an
    /// infeasible temperature, not a failure of the underlying construction.
    #[error("counterexample not found for tau = {tau}, gamma = {gamma}")]
    CounterexampleNotFound { tau: f64, gamma: f64 },

    /// Malformed model or data file.
    #[error("parse error: {0}")]
    Parse(String),

    /// Invalid argument or inconsistent shapes.
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

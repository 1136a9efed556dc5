//! Error types shared across the crate.

use thiserror::Error;

/// Invalid detector configuration or operation input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    /// A field violates one of the documented invariants.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField {
        field: &'static str,
        reason: String,
    },
    /// A domain precondition of an operation was violated.
    #[error("domain error: {0}")]
    Domain(String),
}

impl ConfigError {
    pub fn field(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidField {
            field,
            reason: reason.into(),
        }
    }
}

/// Failure of the self-consistent operating-point solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    /// Neither damped fixed-point iteration nor the bisection fallback
    /// reached the requested tolerance. Carries the last two iterates so an
    /// oscillating or bistable fixed point can be diagnosed.
    #[error(
        "operating point did not converge after {iterations} iterations at power {power_w} W \
         (last iterates {last:.6} V, {previous:.6} V, residual {residual:.3e} V)"
    )]
    NonConvergence {
        power_w: f64,
        iterations: u64,
        last: f64,
        previous: f64,
        residual: f64,
    },
    /// Solver options violate their documented bounds.
    #[error("invalid solver option `{option}`: {reason}")]
    InvalidOptions {
        option: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Errors from sweep orchestration and feature extraction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("power grid must be non-empty, strictly increasing and non-negative: {0}")]
    InvalidGrid(String),
    #[error("sweeps must share a common power grid")]
    MismatchedGrids,
    #[error("gate chain requires at least one gate")]
    EmptyChain,
}

/// Anything that can go wrong when simulating one power point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Errors from the best-practice audit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("audit needs one sweep per config: {configs} configs vs {sweeps} sweeps")]
    MismatchedInputs { configs: usize, sweeps: usize },
    #[error("audit needs at least one detector configuration")]
    Empty,
}

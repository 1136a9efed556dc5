//! Self-consistent steady-state operating point under CW illumination.
//!
//! The photocurrent through the quenching resistor and the APD series
//! resistance drops the reverse bias; the lowered bias suppresses the
//! avalanche response and therefore the photocurrent. The bias-supply time
//! constant is far longer than a gate period, so the feedback closes over
//! the expected per-gate avalanche charge rather than the stochastic
//! per-gate currents, and the Monte-Carlo chain later runs at the frozen
//! operating point.

use serde::{Deserialize, Serialize};

use crate::config::{BiasState, DetectorConfig};
use crate::detector::{eta_of_bias, expected_amplitude, photon_flux_per_gate, sigma_sd};
use crate::error::{ConfigError, SolverError};

/// Self-consistent steady state at one optical power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Incident optical power, W.
    pub power: f64,
    /// Bias reduction at the fixed point, V.
    pub voltage_drop: f64,
    /// Excess bias over breakdown, V (negative below breakdown).
    pub excess_bias: f64,
    /// Photocurrent at the fixed point, A.
    pub photocurrent: f64,
    /// Trigger probability at this point.
    pub eta: f64,
    /// Capacitive residual at this point, units of I_0.
    pub sigma: f64,
    /// Whether the solver met its tolerance.
    pub converged: bool,
    /// Iterations spent (fixed-point plus any bisection steps).
    pub iterations: u64,
}

impl OperatingPoint {
    pub fn bias_state(&self) -> BiasState {
        BiasState {
            voltage_drop: self.voltage_drop,
            excess_bias: self.excess_bias,
        }
    }
}

/// Options for [`solve_operating_point`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence tolerance on the voltage drop, V.
    pub tolerance: f64,
    /// Damping factor of the fixed-point iteration, in (0, 1].
    pub damping: f64,
    /// Iteration budget before falling back to bisection.
    pub max_iterations: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1.0e-3,
            damping: 0.5,
            max_iterations: 10_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(SolverError::InvalidOptions {
                option: "tolerance",
                reason: format!("must be > 0, got {}", self.tolerance),
            });
        }
        if self.damping.is_nan() || self.damping <= 0.0 || self.damping > 1.0 {
            return Err(SolverError::InvalidOptions {
                option: "damping",
                reason: format!("must be in (0, 1], got {}", self.damping),
            });
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidOptions {
                option: "max_iterations",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Steady-state photocurrent at a given bias state, A.
///
/// Avalanche term `f * Q1 * E[amplitude]` plus the primary sub-avalanche
/// term `responsivity * power`. The avalanche term vanishes at or below
/// breakdown, leaving the primary term only.
pub fn photocurrent(
    power: f64,
    state: &BiasState,
    config: &DetectorConfig,
) -> Result<f64, ConfigError> {
    let mu = photon_flux_per_gate(power, config)?;
    let avalanche =
        config.gate_frequency * config.q1 * expected_amplitude(mu, state, config);
    Ok(avalanche + config.responsivity * power)
}

/// Clamped feedback map `F(dV) = clamp(R_total * I(power, dV), 0, dc_bias)`.
fn feedback_map(power: f64, drop: f64, config: &DetectorConfig) -> Result<f64, ConfigError> {
    let state = BiasState::at_drop(drop, config)?;
    let i = photocurrent(power, &state, config)?;
    Ok((config.r_total() * i).clamp(0.0, config.dc_bias))
}

/// Solve the fixed point `dV = clamp(R_total * I(power, dV), 0, dc_bias)`.
///
/// Damped fixed-point iteration from `dV = 0`; if the iteration budget runs
/// out (the map can be steep at large quenching resistance), falls back to
/// bisection on `g(dV) = dV - F(dV)`, which is strictly increasing because
/// the photocurrent is non-increasing in the drop. Deterministic.
pub fn solve_operating_point(
    power: f64,
    config: &DetectorConfig,
    opts: &SolverOptions,
) -> Result<OperatingPoint, SolverError> {
    opts.validate()?;
    config.validate()?;

    let mut drop = 0.0f64;
    let mut previous = 0.0f64;
    let mut iterations = 0u64;
    let mut converged = false;

    while iterations < opts.max_iterations {
        let mapped = feedback_map(power, drop, config)?;
        iterations += 1;
        if (drop - mapped).abs() <= opts.tolerance {
            converged = true;
            break;
        }
        previous = drop;
        drop = (1.0 - opts.damping) * drop + opts.damping * mapped;
    }

    if !converged {
        // Bisection fallback on g(dV) = dV - F(dV) over [0, dc_bias].
        let mut lo = 0.0f64;
        let mut hi = config.dc_bias;
        // g(0) <= 0 and g(dc_bias) >= 0 by construction of the clamp.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mapped = feedback_map(power, mid, config)?;
            iterations += 1;
            if (mid - mapped).abs() <= opts.tolerance {
                previous = drop;
                drop = mid;
                break;
            }
            if mid - mapped < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            previous = drop;
            drop = mid;
        }
    }

    let mapped = feedback_map(power, drop, config)?;
    let residual = (drop - mapped).abs();
    if residual > opts.tolerance {
        return Err(SolverError::NonConvergence {
            power_w: power,
            iterations,
            last: drop,
            previous,
            residual,
        });
    }

    let state = BiasState::at_drop(drop, config)?;
    Ok(OperatingPoint {
        power,
        voltage_drop: drop,
        excess_bias: state.excess_bias,
        photocurrent: photocurrent(power, &state, config)?,
        eta: eta_of_bias(&state, config),
        sigma: sigma_sd(&state, config),
        converged: true,
        iterations,
    })
}

//! Device physics primitives: photon statistics, bias-dependent trigger
//! probability, photon-number-dependent avalanche amplitude and the
//! capacitive residual left by the self-differencer.
//!
//! Everything here is a pure function of the configuration and the bias
//! state; randomness enters only through an explicitly passed generator.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson};

use crate::config::{BiasState, DetectorConfig};
use crate::error::ConfigError;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const LIGHT_SPEED: f64 = 299_792_458.0;

/// Mean photon number per gate for a CW beam of the given optical power.
pub fn photon_flux_per_gate(power: f64, config: &DetectorConfig) -> Result<f64, ConfigError> {
    if power.is_nan() || power < 0.0 {
        return Err(ConfigError::Domain(format!(
            "optical power must be >= 0, got {power}"
        )));
    }
    let photon_energy = PLANCK * LIGHT_SPEED / config.wavelength;
    Ok(power / (photon_energy * config.gate_frequency))
}

/// Per-photon avalanche trigger probability at the given bias state.
///
/// `eta0` at nominal excess bias, zero at or below breakdown, monotone
/// non-increasing in the voltage drop. The shape in between is set by
/// `config.eta_curve`.
pub fn eta_of_bias(state: &BiasState, config: &DetectorConfig) -> f64 {
    config.eta0 * config.eta_curve.suppression(state, config)
}

/// Avalanche amplitude for `m` triggered chains, in units of I_0.
///
/// Linear in the chain count up to the saturation order, and scaled by the
/// relative excess bias so the signal shrinks as the bias drops. Zero below
/// breakdown.
pub fn avalanche_amplitude(m: u64, state: &BiasState, config: &DetectorConfig) -> f64 {
    let scale = (state.excess_bias / config.excess_bias_nominal).max(0.0);
    scale * m.min(config.m_sat as u64) as f64
}

/// Capacitive residual background after self-differencing, units of I_0.
///
/// Grows linearly with the voltage drop: the depletion layer thins as the
/// reverse bias falls, raising the diode capacitance and the uncancelled
/// background.
pub fn sigma_sd(state: &BiasState, config: &DetectorConfig) -> f64 {
    config.sigma0 * (1.0 + config.residual_growth * state.voltage_drop)
}

/// Sample the number of triggered avalanche chains in one gate:
/// Poisson(mu * eta) photon-initiated chains plus an independent
/// Bernoulli(dark_prob) dark chain.
pub fn sample_triggered_chains<R: Rng + ?Sized>(
    mu: f64,
    eta: f64,
    dark_prob: f64,
    rng: &mut R,
) -> u64 {
    let lambda = mu * eta;
    let mut m = if lambda > 0.0 {
        Poisson::new(lambda).expect("lambda is finite and positive").sample(rng) as u64
    } else {
        0
    };
    if dark_prob > 0.0 {
        let dark = Bernoulli::new(dark_prob).expect("dark_prob is a probability");
        if dark.sample(rng) {
            m += 1;
        }
    }
    m
}

/// Closed-form expectation of [`avalanche_amplitude`] over the chain-count
/// distribution of [`sample_triggered_chains`].
///
/// With `m = N + B`, `N ~ Poisson(mu*eta)`, `B ~ Bernoulli(dark_prob)`:
///
/// `E[min(m, M)] = sum_{j=1..M} P(m >= j)
///              = sum_{j=1..M} P(N >= j) + p_d * (1 - P(N >= M))`
///
/// The sum is finite (M = `m_sat` terms), so the result is exact up to
/// floating-point rounding; underflow of the Poisson pmf at large rates
/// lands exactly on the saturation limit.
pub fn expected_amplitude(mu: f64, state: &BiasState, config: &DetectorConfig) -> f64 {
    let scale = (state.excess_bias / config.excess_bias_nominal).max(0.0);
    if scale == 0.0 {
        return 0.0;
    }
    let lambda = mu * eta_of_bias(state, config);
    let m_sat = config.m_sat as usize;

    // Tail probabilities Q_j = P(N >= j) for j = 1..=m_sat via the pmf.
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf; // P(N <= j-1) while iterating
    let mut sum_tails = 0.0;
    let mut q_m = 1.0 - cdf; // becomes P(N >= m_sat) after the loop
    for j in 1..=m_sat {
        sum_tails += 1.0 - cdf;
        q_m = 1.0 - cdf;
        pmf *= lambda / j as f64;
        cdf += pmf;
    }
    // q_m currently holds P(N >= m_sat) computed at j = m_sat.
    let expectation = sum_tails + config.dark_prob * (1.0 - q_m);
    scale * expectation.clamp(0.0, m_sat as f64)
}

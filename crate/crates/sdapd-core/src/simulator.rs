//! Monte-Carlo gate chain with self-differencing discrimination, plus the
//! analytic binary-detector count-rate model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::DetectorConfig;
use crate::detector::{avalanche_amplitude, photon_flux_per_gate, sample_triggered_chains};
use crate::error::{SimulationError, SweepError};
use crate::feedback::{solve_operating_point, OperatingPoint, SolverOptions};

/// Tally of one Monte-Carlo gate chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateChainResult {
    /// Gates that produced a count.
    pub counts: u64,
    /// Gates simulated.
    pub gates: u64,
    /// RNG seed the chain ran with.
    pub seed: u64,
}

impl GateChainResult {
    /// Count rate in Hz: `gate_frequency * counts / gates`.
    pub fn count_rate(&self, config: &DetectorConfig) -> f64 {
        config.gate_frequency * self.counts as f64 / self.gates as f64
    }

    /// Binomial standard error of the count rate, Hz.
    pub fn std_error(&self, config: &DetectorConfig) -> f64 {
        let p = self.counts as f64 / self.gates as f64;
        config.gate_frequency * (p * (1.0 - p) / self.gates as f64).sqrt()
    }
}

/// Count rate of an idealized binary detector, Hz:
/// `f * exp(-mu*eta) * (1 - exp(-mu*eta))`.
///
/// A count requires an avalanche in the current gate and none in the
/// previous one; the symmetric maximum f/4 sits at `mu*eta = ln 2`.
pub fn binary_count_rate(mu: f64, eta: f64, config: &DetectorConfig) -> f64 {
    let x = mu * eta;
    config.gate_frequency * (-x).exp() * (-(-x).exp_m1())
}

/// Run a sequential gate chain at a frozen operating point.
///
/// Per gate: sample the triggered-chain count, form the avalanche amplitude,
/// difference it against the previous gate and count the gate when
/// `delta_n + sigma >= disc_level`. One unscored priming gate seeds the
/// differencer so the first scored gate compares against a real
/// predecessor rather than an empty slot. Fully deterministic for a given
/// seed.
pub fn run_gate_chain(
    op_point: &OperatingPoint,
    config: &DetectorConfig,
    n_gates: u64,
    seed: u64,
) -> Result<GateChainResult, SweepError> {
    if n_gates == 0 {
        return Err(SweepError::EmptyChain);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = op_point.bias_state();
    let mu = photon_flux_per_gate(op_point.power, config)
        .expect("operating point carries a non-negative power");
    let eta = op_point.eta;
    let sigma = op_point.sigma;
    let delta_threshold = config.disc_level - sigma;
    let jitter = if config.sigma_jitter > 0.0 {
        Some(Normal::new(0.0, config.sigma_jitter).expect("finite jitter"))
    } else {
        None
    };

    let mut counts = 0u64;
    let priming = sample_triggered_chains(mu, eta, config.dark_prob, &mut rng);
    let mut previous_amplitude = avalanche_amplitude(priming, &state, config);
    for _ in 0..n_gates {
        let m = sample_triggered_chains(mu, eta, config.dark_prob, &mut rng);
        let amplitude = avalanche_amplitude(m, &state, config);
        let delta = amplitude - previous_amplitude;
        let fired = match jitter {
            None => delta >= delta_threshold,
            Some(dist) => delta + dist.sample(&mut rng) >= delta_threshold,
        };
        if fired {
            counts += 1;
        }
        previous_amplitude = amplitude;
    }

    Ok(GateChainResult {
        counts,
        gates: n_gates,
        seed,
    })
}

/// Solve the operating point at `power`, then run a gate chain there.
pub fn simulate_power_point(
    power: f64,
    config: &DetectorConfig,
    n_gates: u64,
    seed: u64,
) -> Result<(OperatingPoint, GateChainResult), SimulationError> {
    let op = solve_operating_point(power, config, &SolverOptions::default())?;
    let chain = run_gate_chain(&op, config, n_gates, seed)?;
    Ok((op, chain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EtaCurve;
    use crate::detector::{LIGHT_SPEED, PLANCK};

    fn paper() -> DetectorConfig {
        DetectorConfig::paper_default()
    }

    /// Config in which the gate chain reduces to the binary detector:
    /// no feedback, unit saturation, no residual, no dark counts.
    fn binary_limit_config() -> DetectorConfig {
        let mut cfg = paper();
        cfg.q1 = 0.0;
        cfg.responsivity = 0.0;
        cfg.m_sat = 1;
        cfg.sigma0 = 0.0;
        cfg.disc_level = 0.5;
        cfg.dark_prob = 0.0;
        cfg
    }

    /// Power that produces the requested `mu * eta` on a config.
    fn power_for_mu_eta(x: f64, cfg: &DetectorConfig) -> f64 {
        let photon_energy = PLANCK * LIGHT_SPEED / cfg.wavelength;
        x / cfg.eta0 * photon_energy * cfg.gate_frequency
    }

    #[test]
    fn binary_rate_anchors() {
        let cfg = paper();
        assert_eq!(binary_count_rate(0.0, 0.028, &cfg), 0.0);
        // Analytic maximum f/4 at mu*eta = ln 2.
        let peak = binary_count_rate(std::f64::consts::LN_2 / 0.028, 0.028, &cfg);
        assert!((peak - 2.5e8).abs() / 2.5e8 < 1e-12, "peak = {peak}");
        // 100 nW equivalent: mu ~ 808.5, eta = 0.028 -> mu*eta ~ 22.6,
        // rate ~ 0.15 Hz: blinded.
        let mu = photon_flux_per_gate(100.0e-9, &cfg).unwrap();
        let rate = binary_count_rate(mu, 0.028, &cfg);
        assert!(rate < 1.0, "rate = {rate}");
        assert!(rate > 0.1 && rate < 0.2, "rate = {rate}");
    }

    #[test]
    fn chain_rejects_zero_gates() {
        let cfg = paper();
        let op = solve_operating_point(0.0, &cfg, &SolverOptions::default()).unwrap();
        assert!(matches!(
            run_gate_chain(&op, &cfg, 0, 1),
            Err(SweepError::EmptyChain)
        ));
    }

    #[test]
    fn chain_silent_when_residual_below_threshold_and_no_avalanches() {
        let mut cfg = paper();
        cfg.dark_prob = 0.0;
        let op = solve_operating_point(0.0, &cfg, &SolverOptions::default()).unwrap();
        let res = run_gate_chain(&op, &cfg, 100_000, 9).unwrap();
        assert_eq!(res.counts, 0);
    }

    #[test]
    fn chain_fires_every_gate_when_residual_exceeds_threshold() {
        // Below breakdown the amplitudes vanish, so once the grown residual
        // reaches the discrimination level every gate counts: the 1 GHz
        // maximum count rate.
        let mut cfg = paper();
        cfg.disc_level = 1.04;
        let op = OperatingPoint {
            power: 7.0e-3,
            voltage_drop: 6.0,
            excess_bias: cfg.excess_bias_nominal - 6.0,
            photocurrent: 6.3e-3,
            eta: 0.0,
            sigma: 0.64 * (1.0 + 0.125 * 6.0),
            converged: true,
            iterations: 1,
        };
        assert!(op.sigma >= cfg.disc_level);
        let res = run_gate_chain(&op, &cfg, 50_000, 21).unwrap();
        assert_eq!(res.counts, res.gates);
        assert_eq!(res.count_rate(&cfg), cfg.gate_frequency);
    }

    #[test]
    fn chain_matches_binary_model_in_binary_limit() {
        let cfg = binary_limit_config();
        let n_gates = 1_000_000u64;
        for (i, &x) in [0.1, std::f64::consts::LN_2, 5.0].iter().enumerate() {
            let power = power_for_mu_eta(x, &cfg);
            let (op, chain) = simulate_power_point(power, &cfg, n_gates, 1000 + i as u64).unwrap();
            assert_eq!(op.voltage_drop, 0.0);
            let mu = photon_flux_per_gate(power, &cfg).unwrap();
            let analytic = binary_count_rate(mu, cfg.eta0, &cfg);
            let mc = chain.count_rate(&cfg);
            let se = chain.std_error(&cfg);
            assert!(
                (mc - analytic).abs() <= 4.0 * se,
                "mu*eta {x}: mc {mc} vs analytic {analytic} (se {se})"
            );
        }
    }

    #[test]
    fn chain_is_deterministic() {
        let cfg = paper();
        let (op, a) = simulate_power_point(1.0e-6, &cfg, 200_000, 7).unwrap();
        let b = run_gate_chain(&op, &cfg, 200_000, 7).unwrap();
        assert_eq!(a, b);
        let c = run_gate_chain(&op, &cfg, 200_000, 8).unwrap();
        assert_ne!(a.counts, 0);
        // Different seed: same scale, different tally.
        assert!(c.counts > 0 && c.counts != a.counts);
    }

    #[test]
    fn discrimination_level_monotonicity() {
        // Higher threshold never yields more counts when the noise path is
        // identical (coupled seeds).
        let cfg = paper();
        let op = solve_operating_point(1.0e-6, &cfg, &SolverOptions::default()).unwrap();
        let mut last = u64::MAX;
        for &delta in &[0.5, 0.72, 0.9, 1.04, 1.3] {
            let mut c = cfg.clone();
            c.disc_level = delta;
            let res = run_gate_chain(&op, &c, 100_000, 5).unwrap();
            assert!(res.counts <= last, "delta {delta}");
            last = res.counts;
        }
    }

    #[test]
    fn simulate_zero_power_dark_free_is_silent() {
        let mut cfg = paper();
        cfg.dark_prob = 0.0;
        let (_, chain) = simulate_power_point(0.0, &cfg, 100_000, 3).unwrap();
        assert_eq!(chain.counts, 0);
    }

    #[test]
    fn simulate_in_gap_and_recovered_points() {
        // At the ill-set 26 mV-equivalent level the paper-default detector
        // is blind at 2 mW and counts at the full gating rate at 10 mW.
        let mut cfg = paper();
        cfg.disc_level = 1.04;
        let n_gates = 1_000_000u64;
        let (op_gap, gap) = simulate_power_point(2.0e-3, &cfg, n_gates, 17).unwrap();
        assert!(
            gap.count_rate(&cfg) <= 1.0e3,
            "in-gap rate = {}",
            gap.count_rate(&cfg)
        );
        assert!(op_gap.sigma < cfg.disc_level);

        let (op_rec, rec) = simulate_power_point(10.0e-3, &cfg, n_gates, 18).unwrap();
        assert!(op_rec.sigma >= cfg.disc_level, "sigma = {}", op_rec.sigma);
        assert_eq!(rec.count_rate(&cfg), cfg.gate_frequency);
    }

    #[test]
    fn jitter_smooths_the_threshold() {
        let mut cfg = paper();
        cfg.disc_level = 1.04;
        cfg.sigma_jitter = 0.05;
        // Just inside the gap the jitter produces occasional counts where
        // the noiseless discriminator stays silent.
        let op = solve_operating_point(3.0e-3, &cfg, &SolverOptions::default()).unwrap();
        let noisy = run_gate_chain(&op, &cfg, 100_000, 4).unwrap();
        cfg.sigma_jitter = 0.0;
        let clean = run_gate_chain(&op, &cfg, 100_000, 4).unwrap();
        assert_eq!(clean.counts, 0);
        assert!(noisy.counts > 0);
    }

    #[test]
    fn linear_curve_blinds_binary_fashion() {
        // With the linear bias response the feedback cannot hold the gate
        // occupancy down: the detector is already blind at microwatt powers
        // even at the appropriate discrimination level.
        let mut cfg = paper();
        cfg.eta_curve = EtaCurve::Linear;
        let (_, chain) = simulate_power_point(1.0e-6, &cfg, 200_000, 2).unwrap();
        assert_eq!(chain.counts, 0);
    }
}

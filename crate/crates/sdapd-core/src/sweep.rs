//! Power sweeps and curve-feature extraction.
//!
//! A sweep simulates one power point per grid entry (concurrently, each
//! point with its own derived seed) and preserves grid order. Feature
//! extraction then locates the named curve features: blinding gaps, the
//! recovery power, the count-rate plateau and the dip minimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DetectorConfig;
use crate::error::SweepError;
use crate::feedback::{solve_operating_point, OperatingPoint, SolverOptions};
use crate::simulator::{run_gate_chain, GateChainResult};

/// Closed power interval, W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerInterval {
    pub low: f64,
    pub high: f64,
}

impl PowerInterval {
    /// Intersection with another interval, if non-empty.
    pub fn intersect(&self, other: &PowerInterval) -> Option<PowerInterval> {
        let low = self.low.max(other.low);
        let high = self.high.min(other.high);
        (low <= high).then_some(PowerInterval { low, high })
    }
}

/// One simulated grid point. A point whose solver failed carries the error
/// text and no chain result; the sweep itself never aborts on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub power: f64,
    pub operating_point: Option<OperatingPoint>,
    pub chain: Option<GateChainResult>,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn count_rate(&self, config: &DetectorConfig) -> Option<f64> {
        self.chain.as_ref().map(|c| c.count_rate(config))
    }
}

/// Ordered sweep outcome plus extracted features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub config_snapshot: DetectorConfig,
    pub base_seed: u64,
    pub n_gates: u64,
    pub features: SweepFeatures,
}

/// Named curve features of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFeatures {
    /// Blinding threshold the gaps were extracted with, Hz.
    pub blind_threshold_hz: f64,
    /// Maximal runs of consecutive points at or below the threshold.
    pub blinding_gaps: Vec<PowerInterval>,
    /// First grid power after the last gap where the rate reaches 0.99 f.
    pub recovery_power: Option<f64>,
    /// Widest run staying within the relative band of its median over at
    /// least the configured decade span.
    pub plateau: Option<PowerInterval>,
    /// Lowest count rate strictly between the plateau end and the recovery
    /// (or sweep end), outside any gap.
    pub dip_minimum: Option<DipMinimum>,
}

/// Location and value of the count-rate dip minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipMinimum {
    pub power: f64,
    pub count_rate: f64,
}

/// Tunables of [`extract_features`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Rate at or below which a point counts as blinded, Hz.
    pub blind_threshold: f64,
    /// Relative half-width of the plateau band around the run median.
    pub plateau_tolerance: f64,
    /// Minimum plateau span in decades of power.
    pub plateau_min_decades: f64,
    /// Fraction of the gating frequency that counts as recovered.
    pub recovery_fraction: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            blind_threshold: 1.0e3,
            plateau_tolerance: 0.20,
            plateau_min_decades: 1.0,
            recovery_fraction: 0.99,
        }
    }
}

/// Logarithmically spaced grid of `n` powers over `[p_min, p_max]`.
pub fn log_grid(p_min: f64, p_max: f64, n: usize) -> Result<Vec<f64>, SweepError> {
    if p_min.is_nan() || p_max.is_nan() || p_min <= 0.0 || p_max <= p_min || n < 1 {
        return Err(SweepError::InvalidGrid(format!(
            "log grid needs 0 < p_min < p_max and n >= 1, got [{p_min}, {p_max}] x {n}"
        )));
    }
    if n == 1 {
        return Ok(vec![p_min]);
    }
    let (lo, hi) = (p_min.log10(), p_max.log10());
    Ok((0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect())
}

/// Default sweep grid: 81 log-spaced points over 1 pW to 10 mW.
pub fn default_grid() -> Vec<f64> {
    log_grid(1.0e-12, 1.0e-2, 81).expect("static grid bounds")
}

/// Per-point seed derivation: `base_seed XOR point index`. Documented so
/// partial re-runs reproduce individual points.
pub fn derive_point_seed(base_seed: u64, index: usize) -> u64 {
    base_seed ^ index as u64
}

fn validate_grid(grid: &[f64]) -> Result<(), SweepError> {
    if grid.is_empty() {
        return Err(SweepError::InvalidGrid("empty grid".into()));
    }
    if grid[0] < 0.0 {
        return Err(SweepError::InvalidGrid("negative power".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SweepError::InvalidGrid(
            "powers must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Run one simulated power sweep over the grid.
///
/// Points execute concurrently; results are merged back in grid order and
/// per-point failures are recorded rather than aborting the sweep.
pub fn run_sweep(
    config: &DetectorConfig,
    power_grid: &[f64],
    n_gates: u64,
    base_seed: u64,
) -> Result<SweepResult, SweepError> {
    run_sweep_with(
        config,
        power_grid,
        n_gates,
        base_seed,
        &SolverOptions::default(),
        &FeatureOptions::default(),
    )
}

/// [`run_sweep`] with explicit solver and feature options.
pub fn run_sweep_with(
    config: &DetectorConfig,
    power_grid: &[f64],
    n_gates: u64,
    base_seed: u64,
    solver: &SolverOptions,
    features: &FeatureOptions,
) -> Result<SweepResult, SweepError> {
    validate_grid(power_grid)?;
    if n_gates == 0 {
        return Err(SweepError::EmptyChain);
    }

    let points: Vec<SweepPoint> = power_grid
        .par_iter()
        .enumerate()
        .map(|(i, &power)| {
            let seed = derive_point_seed(base_seed, i);
            match solve_operating_point(power, config, solver) {
                Ok(op) => match run_gate_chain(&op, config, n_gates, seed) {
                    Ok(chain) => SweepPoint {
                        power,
                        operating_point: Some(op),
                        chain: Some(chain),
                        error: None,
                    },
                    Err(e) => SweepPoint {
                        power,
                        operating_point: Some(op),
                        chain: None,
                        error: Some(e.to_string()),
                    },
                },
                Err(e) => SweepPoint {
                    power,
                    operating_point: None,
                    chain: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut result = SweepResult {
        points,
        config_snapshot: config.clone(),
        base_seed,
        n_gates,
        features: SweepFeatures {
            blind_threshold_hz: features.blind_threshold,
            blinding_gaps: Vec::new(),
            recovery_power: None,
            plateau: None,
            dip_minimum: None,
        },
    };
    result.features = extract_features(&result, features);
    Ok(result)
}

/// Extract the named curve features from a sweep. Pure and deterministic.
pub fn extract_features(sweep: &SweepResult, opts: &FeatureOptions) -> SweepFeatures {
    let config = &sweep.config_snapshot;
    let rates: Vec<Option<f64>> = sweep
        .points
        .iter()
        .map(|p| p.count_rate(config))
        .collect();
    let powers: Vec<f64> = sweep.points.iter().map(|p| p.power).collect();

    // Blinding gaps: maximal runs of points at or below the threshold.
    let mut gaps: Vec<PowerInterval> = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, rate) in rates.iter().enumerate() {
        let blinded = matches!(rate, Some(r) if *r <= opts.blind_threshold);
        match (blinded, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                gaps.push(PowerInterval {
                    low: powers[s],
                    high: powers[i - 1],
                });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        gaps.push(PowerInterval {
            low: powers[s],
            high: *powers.last().expect("non-empty sweep"),
        });
    }

    // Recovery: first point after the last gap reaching the full rate.
    let recovery_power = gaps.last().and_then(|last_gap| {
        let recovered_at = opts.recovery_fraction * config.gate_frequency;
        sweep
            .points
            .iter()
            .zip(&rates)
            .find(|(p, r)| p.power > last_gap.high && matches!(r, Some(r) if *r >= recovered_at))
            .map(|(p, _)| p.power)
    });

    // Plateau: widest run (in decades) whose rates all stay within the
    // relative band around the run median while spanning enough decades.
    // Runs dominated by blinded points never qualify.
    let plateau = widest_plateau(&powers, &rates, opts);

    // Dip: lowest non-blinded rate strictly after the plateau and before
    // the recovery power (or sweep end), provided it actually dips below
    // the plateau band.
    let dip_minimum = plateau.and_then(|plat| {
        let end = recovery_power.unwrap_or(f64::INFINITY);
        let plateau_median = run_median(&powers, &rates, &plat);
        sweep
            .points
            .iter()
            .zip(&rates)
            .filter(|(p, r)| {
                p.power > plat.high
                    && p.power < end
                    && matches!(r, Some(r) if *r > opts.blind_threshold)
            })
            .map(|(p, r)| DipMinimum {
                power: p.power,
                count_rate: r.expect("filtered on Some"),
            })
            .min_by(|a, b| a.count_rate.total_cmp(&b.count_rate))
            .filter(|dip| dip.count_rate < (1.0 - opts.plateau_tolerance) * plateau_median)
    });

    SweepFeatures {
        blind_threshold_hz: opts.blind_threshold,
        blinding_gaps: gaps,
        recovery_power,
        plateau,
        dip_minimum,
    }
}

fn run_median(powers: &[f64], rates: &[Option<f64>], interval: &PowerInterval) -> f64 {
    let vals: Vec<f64> = powers
        .iter()
        .zip(rates)
        .filter(|(p, _)| **p >= interval.low && **p <= interval.high)
        .filter_map(|(_, r)| *r)
        .collect();
    if vals.is_empty() {
        return 0.0;
    }
    median_of(vals)
}

fn median_of(mut vals: Vec<f64>) -> f64 {
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        0.5 * (vals[mid - 1] + vals[mid])
    }
}

fn widest_plateau(
    powers: &[f64],
    rates: &[Option<f64>],
    opts: &FeatureOptions,
) -> Option<PowerInterval> {
    let n = powers.len();
    let mut best: Option<(f64, PowerInterval)> = None;
    for start in 0..n {
        let Some(r0) = rates[start] else { continue };
        if r0 <= opts.blind_threshold {
            continue;
        }
        let mut vals = vec![r0];
        for end in start + 1..n {
            let Some(r) = rates[end] else { break };
            if r <= opts.blind_threshold {
                break;
            }
            vals.push(r);
            let median = median_of(vals.clone());
            let lo = (1.0 - opts.plateau_tolerance) * median;
            let hi = (1.0 + opts.plateau_tolerance) * median;
            if vals.iter().all(|v| *v >= lo && *v <= hi) {
                let decades = (powers[end] / powers[start]).log10();
                if decades >= opts.plateau_min_decades {
                    let better = match &best {
                        Some((span, _)) => decades > *span,
                        None => true,
                    };
                    if better {
                        best = Some((
                            decades,
                            PowerInterval {
                                low: powers[start],
                                high: powers[end],
                            },
                        ));
                    }
                }
            }
        }
    }
    best.map(|(_, interval)| interval)
}

/// Pairwise intersections of blinding gaps across several sweeps.
///
/// Returns every non-empty intersection between a gap of one sweep and a
/// gap of another; an empty result means no power blinds two detectors at
/// once. All sweeps must share the same power grid.
pub fn gap_overlap(sweeps: &[&SweepResult]) -> Result<Vec<PowerInterval>, SweepError> {
    if sweeps.len() < 2 {
        return Err(SweepError::InvalidGrid(
            "gap overlap needs at least two sweeps".into(),
        ));
    }
    let grid: Vec<f64> = sweeps[0].points.iter().map(|p| p.power).collect();
    for s in &sweeps[1..] {
        let other: Vec<f64> = s.points.iter().map(|p| p.power).collect();
        if other != grid {
            return Err(SweepError::MismatchedGrids);
        }
    }

    let mut overlaps = Vec::new();
    for i in 0..sweeps.len() {
        for j in i + 1..sweeps.len() {
            for a in &sweeps[i].features.blinding_gaps {
                for b in &sweeps[j].features.blinding_gaps {
                    if let Some(both) = a.intersect(b) {
                        overlaps.push(both);
                    }
                }
            }
        }
    }
    Ok(overlaps)
}

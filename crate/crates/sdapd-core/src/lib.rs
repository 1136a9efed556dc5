//! Simulation of a gigahertz-gated, self-differencing (SD) InGaAs avalanche
//! photodiode under continuous-wave bright illumination.
//!
//! The model couples three ingredients:
//!
//! * per-gate photon statistics and a photon-number-dependent, saturating
//!   avalanche amplitude ([`detector`]),
//! * the photocurrent's negative feedback on the bias: the voltage drop over
//!   the quenching resistor and the APD series resistance lowers the excess
//!   bias, suppressing the trigger probability and the avalanche amplitude
//!   while growing the uncancelled capacitive residual ([`feedback`]),
//! * a sequential Monte-Carlo gate chain with self-differencing
//!   discrimination ([`simulator`]).
//!
//! On top of that, [`sweep`] orchestrates deterministic power sweeps and
//! extracts curve features (count-rate plateau, blinding gaps, recovery
//! power, dip minimum), and [`audit`] checks detector configurations against
//! a set of best-practice criteria for blinding resilience.

pub mod audit;
pub mod config;
pub mod detector;
pub mod error;
pub mod feedback;
pub mod simulator;
pub mod sweep;

pub use audit::{run_audit, AuditReport, CriterionRecord, MonitorSpec, Verdict};
pub use config::{BiasState, DetectorConfig, EtaCurve};
pub use error::{AuditError, ConfigError, SimulationError, SolverError, SweepError};
pub use feedback::{photocurrent, solve_operating_point, OperatingPoint, SolverOptions};
pub use simulator::{binary_count_rate, run_gate_chain, simulate_power_point, GateChainResult};
pub use sweep::{
    extract_features, gap_overlap, run_sweep, FeatureOptions, PowerInterval, SweepFeatures,
    SweepPoint, SweepResult,
};

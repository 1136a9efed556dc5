//! Best-practice compliance audit for SD detector configurations.
//!
//! Six machine-checked criteria, evaluated against the submitted
//! configurations and their simulated sweeps:
//!
//! * C1 photocurrent monitoring      — a current monitor is installed and
//!   the blinding-regime photocurrent is large enough to trip it.
//! * C2 quenching resistor bound     — every biasing resistor is below
//!   50 kOhm so feedback cannot throttle the legitimate count rate.
//! * C3 discrimination level         — the level sits above the nominal
//!   residual background but below the residual at full excess-bias drop.
//! * C4 distinct resistors           — multi-detector systems use resistor
//!   values whose blinding gaps never overlap.
//! * C5 breakdown-residual check     — past each blinding gap the grown
//!   residual actually overcomes the discrimination level.
//! * C6 behaviour modelled           — a complete, converged simulation of
//!   the configuration exists (this run).

use serde::{Deserialize, Serialize};

use crate::config::{BiasState, DetectorConfig};
use crate::detector::sigma_sd;
use crate::error::AuditError;
use crate::sweep::{gap_overlap, SweepResult};

/// Photocurrent monitoring hardware attached to the bias line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    /// Sense resistor, Ohm.
    pub sense_resistor: f64,
    /// Current at which the monitor raises an alarm, A.
    pub alarm_current: f64,
}

/// Verdict of a single criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// One criterion record with the measured evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRecord {
    /// Criterion identifier, C1..C6.
    pub id: String,
    pub title: String,
    pub verdict: Verdict,
    /// Measured values backing the verdict (name -> value).
    pub evidence: Vec<Evidence>,
    /// What to change when the criterion fails.
    pub remediation: Option<String>,
}

/// A named measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub name: String,
    pub value: f64,
}

impl Evidence {
    fn new(name: impl Into<String>, value: f64) -> Self {
        Evidence {
            name: name.into(),
            value,
        }
    }
}

/// Full audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub criteria: Vec<CriterionRecord>,
    /// Pass iff no criterion failed.
    pub overall_pass: bool,
}

impl AuditReport {
    pub fn criterion(&self, id: &str) -> Option<&CriterionRecord> {
        self.criteria.iter().find(|c| c.id == id)
    }

    pub fn any_not_applicable(&self) -> bool {
        self.criteria
            .iter()
            .any(|c| c.verdict == Verdict::NotApplicable)
    }
}

const R_QUENCH_LIMIT: f64 = 50.0e3;

/// Audit a set of detector configurations against their sweeps.
///
/// `configs` and `sweeps` are matched by index; C4 needs at least two
/// detectors and is `not_applicable` otherwise.
pub fn run_audit(
    configs: &[DetectorConfig],
    sweeps: &[&SweepResult],
    monitor: Option<MonitorSpec>,
) -> Result<AuditReport, AuditError> {
    if configs.is_empty() {
        return Err(AuditError::Empty);
    }
    if configs.len() != sweeps.len() {
        return Err(AuditError::MismatchedInputs {
            configs: configs.len(),
            sweeps: sweeps.len(),
        });
    }

    let criteria = vec![
        check_c1(sweeps, monitor),
        check_c2(configs),
        check_c3(configs),
        check_c4(sweeps),
        check_c5(configs, sweeps),
        check_c6(sweeps),
    ];
    let overall_pass = criteria.iter().all(|c| c.verdict != Verdict::Fail);
    Ok(AuditReport {
        criteria,
        overall_pass,
    })
}

/// C1: the photocurrent is monitored, and everywhere a detector is blinded
/// the current stays above the alarm level, so the attack is visible.
fn check_c1(sweeps: &[&SweepResult], monitor: Option<MonitorSpec>) -> CriterionRecord {
    let title = "photocurrent monitoring".to_string();
    let Some(monitor) = monitor else {
        return CriterionRecord {
            id: "C1".into(),
            title,
            verdict: Verdict::Fail,
            evidence: vec![],
            remediation: Some(
                "Add a photocurrent monitor on the bias line; a 1 kOhm sense resistor \
                 resolves the milliamp-scale blinding current."
                    .into(),
            ),
        };
    };

    let mut evidence = vec![
        Evidence::new("sense_resistor_ohm", monitor.sense_resistor),
        Evidence::new("alarm_current_a", monitor.alarm_current),
    ];
    let mut min_in_gap: Option<f64> = None;
    for sweep in sweeps {
        for gap in &sweep.features.blinding_gaps {
            for point in &sweep.points {
                if point.power < gap.low || point.power > gap.high {
                    continue;
                }
                if let Some(op) = &point.operating_point {
                    min_in_gap = Some(match min_in_gap {
                        Some(m) => m.min(op.photocurrent),
                        None => op.photocurrent,
                    });
                }
            }
        }
    }

    match min_in_gap {
        None => CriterionRecord {
            id: "C1".into(),
            title,
            verdict: Verdict::Pass,
            evidence,
            remediation: None,
        },
        Some(min_current) => {
            evidence.push(Evidence::new("min_in_gap_photocurrent_a", min_current));
            let pass = min_current >= monitor.alarm_current;
            CriterionRecord {
                id: "C1".into(),
                title,
                verdict: if pass { Verdict::Pass } else { Verdict::Fail },
                evidence,
                remediation: (!pass).then(|| {
                    "Lower the alarm current below the minimum in-gap photocurrent so \
                     blinding always trips the monitor."
                        .into()
                }),
            }
        }
    }
}

/// C2: every quenching/biasing resistor is strictly below 50 kOhm.
fn check_c2(configs: &[DetectorConfig]) -> CriterionRecord {
    let max_rq = configs
        .iter()
        .map(|c| c.r_quench)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = configs.iter().all(|c| c.r_quench < R_QUENCH_LIMIT);
    CriterionRecord {
        id: "C2".into(),
        title: "quenching resistor below 50 kOhm".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        evidence: vec![
            Evidence::new("max_r_quench_ohm", max_rq),
            Evidence::new("limit_ohm", R_QUENCH_LIMIT),
        ],
        remediation: (!pass).then(|| {
            "Replace the biasing resistor with a value below 50 kOhm; stronger feedback \
             shifts the blinding gap to lower powers and throttles the count rate."
                .into()
        }),
    }
}

/// C3: the discrimination level exceeds the nominal residual (no permanent
/// self-counting) yet stays below the residual at a full excess-bias drop,
/// so the background can overcome it once the bias collapses.
fn check_c3(configs: &[DetectorConfig]) -> CriterionRecord {
    let mut evidence = Vec::new();
    let mut pass = true;
    for (i, config) in configs.iter().enumerate() {
        let at_breakdown = BiasState::at_drop(config.excess_bias_nominal, config)
            .expect("nominal excess bias is positive");
        let sigma_breakdown = sigma_sd(&at_breakdown, config);
        let ok = config.disc_level <= sigma_breakdown && config.disc_level > config.sigma0;
        pass &= ok;
        evidence.push(Evidence::new(format!("detector{i}_disc_level_i0"), config.disc_level));
        evidence.push(Evidence::new(
            format!("detector{i}_sigma_at_breakdown_i0"),
            sigma_breakdown,
        ));
        evidence.push(Evidence::new(format!("detector{i}_sigma0_i0"), config.sigma0));
    }
    CriterionRecord {
        id: "C3".into(),
        title: "appropriate discrimination level".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        evidence,
        remediation: (!pass).then(|| {
            "Set the discrimination level between the nominal capacitive residual and \
             the residual at a breakdown-sized bias drop."
                .into()
        }),
    }
}

/// C4: in a multi-detector system, no power blinds two detectors at once.
fn check_c4(sweeps: &[&SweepResult]) -> CriterionRecord {
    if sweeps.len() < 2 {
        return CriterionRecord {
            id: "C4".into(),
            title: "distinct resistor values across detectors".into(),
            verdict: Verdict::NotApplicable,
            evidence: vec![Evidence::new("detectors", sweeps.len() as f64)],
            remediation: None,
        };
    }
    match gap_overlap(sweeps) {
        Ok(overlaps) => {
            let pass = overlaps.is_empty();
            let mut evidence = vec![Evidence::new("overlap_count", overlaps.len() as f64)];
            if let Some(first) = overlaps.first() {
                evidence.push(Evidence::new("first_overlap_low_w", first.low));
                evidence.push(Evidence::new("first_overlap_high_w", first.high));
            }
            CriterionRecord {
                id: "C4".into(),
                title: "distinct resistor values across detectors".into(),
                verdict: if pass { Verdict::Pass } else { Verdict::Fail },
                evidence,
                remediation: (!pass).then(|| {
                    "Choose different biasing resistor values so the detectors' blinding \
                     gaps no longer share any power interval."
                        .into()
                }),
            }
        }
        Err(e) => CriterionRecord {
            id: "C4".into(),
            title: "distinct resistor values across detectors".into(),
            verdict: Verdict::Fail,
            evidence: vec![],
            remediation: Some(format!("could not compare sweeps: {e}")),
        },
    }
}

/// C5: past each blinding gap the grown capacitive residual actually
/// overcomes the discrimination level (verified on the sweep), or no gap
/// exists at all.
fn check_c5(configs: &[DetectorConfig], sweeps: &[&SweepResult]) -> CriterionRecord {
    let mut pass = true;
    let mut evidence = Vec::new();
    for (i, (config, sweep)) in configs.iter().zip(sweeps).enumerate() {
        let Some(last_gap) = sweep.features.blinding_gaps.last() else {
            continue;
        };
        let max_sigma_post_gap = sweep
            .points
            .iter()
            .filter(|p| p.power > last_gap.high)
            .filter_map(|p| p.operating_point.as_ref())
            .map(|op| op.sigma)
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = max_sigma_post_gap >= config.disc_level;
        pass &= ok;
        evidence.push(Evidence::new(
            format!("detector{i}_max_post_gap_sigma_i0"),
            max_sigma_post_gap,
        ));
        evidence.push(Evidence::new(format!("detector{i}_disc_level_i0"), config.disc_level));
    }
    CriterionRecord {
        id: "C5".into(),
        title: "residual can overcome the discrimination level below breakdown".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        evidence,
        remediation: (!pass).then(|| {
            "Detune the self-differencing cancellation slightly or lower the \
             discrimination level until the residual background revives the count \
             rate below breakdown."
                .into()
        }),
    }
}

/// C6: the detector behaviour has been modelled: the submitted sweep is
/// complete, every point converged and the features were extracted.
fn check_c6(sweeps: &[&SweepResult]) -> CriterionRecord {
    let mut pass = true;
    let mut evidence = Vec::new();
    for (i, sweep) in sweeps.iter().enumerate() {
        let failed = sweep.points.iter().filter(|p| p.error.is_some()).count();
        let converged = sweep
            .points
            .iter()
            .filter_map(|p| p.operating_point.as_ref())
            .filter(|op| op.converged)
            .count();
        pass &= failed == 0 && converged == sweep.points.len();
        evidence.push(Evidence::new(format!("detector{i}_points"), sweep.points.len() as f64));
        evidence.push(Evidence::new(format!("detector{i}_failed_points"), failed as f64));
        evidence.push(Evidence::new(
            format!("detector{i}_blinding_gaps"),
            sweep.features.blinding_gaps.len() as f64,
        ));
    }
    CriterionRecord {
        id: "C6".into(),
        title: "detector behaviour modelled".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        evidence,
        remediation: (!pass).then(|| {
            "Re-run the model until every operating point converges; unresolved points \
             leave the blinding response unverified."
                .into()
        }),
    }
}

//! Configuration-file parsing, run manifests and result emitters for the
//! `sdapd` command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sdapd_core::audit::AuditReport;
use sdapd_core::config::{DetectorConfig, EtaCurve};
use sdapd_core::sweep::{SweepFeatures, SweepResult};

/// I_0 units per millivolt of discrimination level. Calibrated from the
/// dark-count kink at 16 mV, interpreted as the level where the nominal
/// capacitive residual (0.64 I_0) stops dominating: 16 mV = 0.64 I_0.
pub const I0_PER_MV: f64 = 0.04;

/// Errors raised while reading a configuration file.
#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("{path}:{line}: {message}")]
    Syntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: missing key `{key}` (pass --defaults paper to fill unset keys)")]
    MissingKey { path: String, key: &'static str },
    #[error("{path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: sdapd_core::ConfigError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How unset keys are filled during parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefaultsPolicy {
    /// Every key must be present in the file.
    Strict,
    /// Unset keys fall back to the paper-default profile.
    Paper,
}

/// Parsed configuration plus bookkeeping about how it was resolved.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub config: DetectorConfig,
    /// Keys taken from the paper-default profile rather than the file.
    pub defaulted_keys: Vec<String>,
    /// Present when the discrimination level was given in millivolts; the
    /// I_0 value stored in the config equals `disc_mv * 0.04`.
    pub disc_mv: Option<f64>,
}

/// Parse a `key = value` configuration file into a [`DetectorConfig`].
///
/// Keys are exactly the `DetectorConfig` field names in SI units, with the
/// discrimination level in I_0 units. `disc_mv` may be given instead of
/// `disc_level` and converts at 0.04 I_0/mV. Lines starting with `#` are
/// comments. Unknown keys are rejected. With [`DefaultsPolicy::Strict`]
/// every key must be present; with `Paper`, unset keys fall back to the
/// paper-default profile.
pub fn parse_config(path: &Path, policy: DefaultsPolicy) -> Result<ResolvedConfig, ParseError> {
    let text = fs::read_to_string(path)?;
    parse_config_str(&text, &path.display().to_string(), policy)
}

const REQUIRED_KEYS: &[&str] = &[
    "gate_frequency",
    "excess_bias_nominal",
    "dc_bias",
    "r_apd",
    "r_quench",
    "eta0",
    "sigma0",
    "residual_growth",
    "m_sat",
    "q1",
    "dark_prob",
    "responsivity",
    "wavelength",
    "disc_level",
];

pub fn parse_config_str(
    text: &str,
    path: &str,
    policy: DefaultsPolicy,
) -> Result<ResolvedConfig, ParseError> {
    let mut config = DetectorConfig::paper_default();
    let mut seen: Vec<&'static str> = Vec::new();
    let mut disc_mv = None;
    let mut eta_kind: Option<String> = None;
    let mut eta_v_scale = None;
    let mut eta_shape = None;
    let mut eta_floor = None;

    let syntax = |line: usize, message: String| ParseError::Syntax {
        path: path.to_string(),
        line,
        message,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(syntax(line_no, format!("expected `key = value`, got `{line}`")));
        };
        let key = key.trim();
        let value = value.trim();
        let num = || -> Result<f64, ParseError> {
            value
                .parse::<f64>()
                .map_err(|e| syntax(line_no, format!("bad number `{value}` for `{key}`: {e}")))
        };

        match key {
            "gate_frequency" => config.gate_frequency = num()?,
            "excess_bias_nominal" => config.excess_bias_nominal = num()?,
            "dc_bias" => config.dc_bias = num()?,
            "r_apd" => config.r_apd = num()?,
            "r_quench" => config.r_quench = num()?,
            "eta0" => config.eta0 = num()?,
            "sigma0" => config.sigma0 = num()?,
            "residual_growth" => config.residual_growth = num()?,
            "m_sat" => {
                config.m_sat = value.parse::<u32>().map_err(|e| {
                    syntax(line_no, format!("bad integer `{value}` for `m_sat`: {e}"))
                })?
            }
            "q1" => config.q1 = num()?,
            "dark_prob" => config.dark_prob = num()?,
            "responsivity" => config.responsivity = num()?,
            "wavelength" => config.wavelength = num()?,
            "disc_level" => config.disc_level = num()?,
            "disc_mv" => {
                let mv = num()?;
                disc_mv = Some(mv);
                config.disc_level = mv * I0_PER_MV;
            }
            "sigma_jitter" => config.sigma_jitter = num()?,
            "eta_curve" => eta_kind = Some(value.to_string()),
            "eta_v_scale" => eta_v_scale = Some(num()?),
            "eta_shape" => eta_shape = Some(num()?),
            "eta_floor" => eta_floor = Some(num()?),
            other => {
                return Err(syntax(line_no, format!("unknown key `{other}`")));
            }
        }
        if key == "disc_mv" {
            if !seen.contains(&"disc_level") {
                seen.push("disc_level");
            }
        } else if let Some(known) = REQUIRED_KEYS.iter().find(|k| **k == key) {
            if !seen.contains(known) {
                seen.push(known);
            }
        }
    }

    // Optional trigger-curve selection; defaults to the calibrated paper
    // curve, matching `DetectorConfig::paper_default`.
    match eta_kind.as_deref() {
        None => {
            if eta_v_scale.is_some() || eta_shape.is_some() || eta_floor.is_some() {
                return Err(syntax(
                    0,
                    "eta_v_scale/eta_shape/eta_floor need `eta_curve = exp_floor`".into(),
                ));
            }
        }
        Some("linear") => config.eta_curve = EtaCurve::Linear,
        Some("exp_floor") => {
            let EtaCurve::ExpFloor {
                v_scale: dv,
                shape: ds,
                floor: df,
            } = EtaCurve::paper_calibrated()
            else {
                unreachable!()
            };
            config.eta_curve = EtaCurve::ExpFloor {
                v_scale: eta_v_scale.unwrap_or(dv),
                shape: eta_shape.unwrap_or(ds),
                floor: eta_floor.unwrap_or(df),
            };
        }
        Some(other) => {
            return Err(syntax(
                0,
                format!("unknown eta_curve `{other}` (expected `linear` or `exp_floor`)"),
            ));
        }
    }

    let defaulted: Vec<String> = REQUIRED_KEYS
        .iter()
        .filter(|k| !seen.contains(*k))
        .map(|k| k.to_string())
        .collect();
    if policy == DefaultsPolicy::Strict {
        if let Some(missing) = REQUIRED_KEYS.iter().find(|k| !seen.contains(*k)) {
            return Err(ParseError::MissingKey {
                path: path.to_string(),
                key: missing,
            });
        }
    }

    config.validate().map_err(|source| ParseError::Invalid {
        path: path.to_string(),
        source,
    })?;

    Ok(ResolvedConfig {
        config,
        defaulted_keys: defaulted,
        disc_mv,
    })
}

/// Versioned wrapper for emitted JSON documents.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub payload: T,
}

/// Write the sweep as CSV with the stable column set, one row per point in
/// ascending power, floats in full round-trip precision.
pub fn sweep_csv(sweep: &SweepResult) -> String {
    let config = &sweep.config_snapshot;
    let mut out = String::from(
        "power_w,count_rate_hz,std_error_hz,photocurrent_a,voltage_drop_v,excess_bias_v,sigma_i0,eta,converged\n",
    );
    for point in &sweep.points {
        let (rate, err) = match &point.chain {
            Some(chain) => (chain.count_rate(config), chain.std_error(config)),
            None => (f64::NAN, f64::NAN),
        };
        match &point.operating_point {
            Some(op) => {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    point.power,
                    rate,
                    err,
                    op.photocurrent,
                    op.voltage_drop,
                    op.excess_bias,
                    op.sigma,
                    op.eta,
                    op.converged
                )
                .expect("writing to string");
            }
            None => {
                writeln!(out, "{},,,,,,,,false", point.power).expect("writing to string");
            }
        }
    }
    out
}

pub fn emit_sweep_csv(sweep: &SweepResult, path: &Path) -> std::io::Result<()> {
    fs::write(path, sweep_csv(sweep))
}

/// Two-column whitespace-separated plot data: power and count rate.
pub fn plot_data(sweep: &SweepResult) -> String {
    let config = &sweep.config_snapshot;
    let mut out = String::new();
    for point in &sweep.points {
        if let Some(rate) = point.count_rate(config) {
            writeln!(out, "{} {}", point.power, rate).expect("writing to string");
        }
    }
    out
}

pub fn emit_features_json(features: &SweepFeatures, path: &Path) -> std::io::Result<()> {
    let doc = Versioned {
        schema_version: 1,
        payload: features,
    };
    fs::write(path, serde_json::to_string_pretty(&doc).expect("serializable"))
}

pub fn emit_report_json(report: &AuditReport, path: &Path) -> std::io::Result<()> {
    let doc = Versioned {
        schema_version: 1,
        payload: report,
    };
    fs::write(path, serde_json::to_string_pretty(&doc).expect("serializable"))
}

/// Grid specification `pmin:pmax:n:log` or `pmin:pmax:n:linear`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub n_points: usize,
    pub log_spacing: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            p_min: 1.0e-12,
            p_max: 1.0e-2,
            n_points: 81,
            log_spacing: true,
        }
    }
}

impl GridSpec {
    pub fn parse(spec: &str) -> Result<Self, String> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 4 {
            return Err(format!("grid spec `{spec}` is not pmin:pmax:n:(log|linear)"));
        }
        let p_min: f64 = parts[0].parse().map_err(|e| format!("bad pmin: {e}"))?;
        let p_max: f64 = parts[1].parse().map_err(|e| format!("bad pmax: {e}"))?;
        let n_points: usize = parts[2].parse().map_err(|e| format!("bad n: {e}"))?;
        let log_spacing = match parts[3] {
            "log" => true,
            "linear" => false,
            other => return Err(format!("bad spacing `{other}` (log|linear)")),
        };
        let grid = GridSpec {
            p_min,
            p_max,
            n_points,
            log_spacing,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.p_min.is_nan() || self.p_max.is_nan() || self.p_min < 0.0 || self.p_min >= self.p_max {
            return Err(format!(
                "grid needs 0 <= pmin < pmax, got [{}, {}]",
                self.p_min, self.p_max
            ));
        }
        if self.n_points < 1 {
            return Err("grid needs at least one point".into());
        }
        if self.log_spacing && self.p_min <= 0.0 {
            return Err("log spacing needs pmin > 0".into());
        }
        Ok(())
    }

    pub fn powers(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.p_min];
        }
        let n = self.n_points;
        if self.log_spacing {
            let (lo, hi) = (self.p_min.log10(), self.p_max.log10());
            (0..n)
                .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
                .collect()
        } else {
            (0..n)
                .map(|i| self.p_min + (self.p_max - self.p_min) * i as f64 / (n - 1) as f64)
                .collect()
        }
    }
}

/// Everything one run was invoked with; echoed to the output directory so
/// results stay reproducible.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub grid: GridSpec,
    pub n_gates: u64,
    pub seed: u64,
    pub blind_threshold_hz: f64,
    /// Per-point seeds derive as `seed XOR point_index`.
    pub seed_derivation: &'a str,
    pub configs: Vec<&'a ResolvedConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_explicit_values() {
        let text = "eta0 = 0.028\nsigma0 = 0.64\n";
        let resolved =
            parse_config_str(text, "test.cfg", DefaultsPolicy::Paper).unwrap();
        assert_eq!(resolved.config.eta0, 0.028);
        assert_eq!(resolved.config.sigma0, 0.64);
        assert!(resolved
            .defaulted_keys
            .iter()
            .any(|k| k == "gate_frequency"));
    }

    #[test]
    fn strict_mode_requires_all_keys() {
        let err = parse_config_str("eta0 = 0.028", "t.cfg", DefaultsPolicy::Strict).unwrap_err();
        assert!(matches!(err, ParseError::MissingKey { .. }));
    }

    #[test]
    fn empty_file_with_paper_defaults_is_the_paper_profile() {
        let resolved = parse_config_str("", "t.cfg", DefaultsPolicy::Paper).unwrap();
        assert_eq!(resolved.config, DetectorConfig::paper_default());
        assert_eq!(resolved.defaulted_keys.len(), REQUIRED_KEYS.len());
    }

    #[test]
    fn rejects_invalid_probability_with_field_name() {
        let err = parse_config_str("eta0 = 1.5", "t.cfg", DefaultsPolicy::Paper).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("eta0"), "{msg}");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_syntax_with_line_numbers() {
        let err =
            parse_config_str("eta0 = 0.028\nnope = 1\n", "t.cfg", DefaultsPolicy::Paper)
                .unwrap_err();
        assert!(err.to_string().contains("t.cfg:2"), "{err}");

        let err = parse_config_str("what even is this", "t.cfg", DefaultsPolicy::Paper)
            .unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn disc_mv_converts_at_forty_millis() {
        let resolved =
            parse_config_str("disc_mv = 26", "t.cfg", DefaultsPolicy::Paper).unwrap();
        assert!((resolved.config.disc_level - 1.04).abs() < 1e-12);
        assert_eq!(resolved.disc_mv, Some(26.0));
        let resolved =
            parse_config_str("disc_mv = 18", "t.cfg", DefaultsPolicy::Paper).unwrap();
        assert!((resolved.config.disc_level - 0.72).abs() < 1e-12);
    }

    #[test]
    fn linear_curve_selectable() {
        let resolved = parse_config_str("eta_curve = linear", "t.cfg", DefaultsPolicy::Paper)
            .unwrap();
        assert_eq!(resolved.config.eta_curve, EtaCurve::Linear);
    }

    #[test]
    fn grid_spec_round_trip() {
        let spec = GridSpec::parse("1e-12:1e-2:81:log").unwrap();
        assert_eq!(spec, GridSpec::default());
        let powers = spec.powers();
        assert_eq!(powers.len(), 81);
        assert!((powers[0] - 1e-12).abs() < 1e-24);
        assert!(GridSpec::parse("1:0.5:5:log").is_err());
        assert!(GridSpec::parse("oops").is_err());
        let linear = GridSpec::parse("0:10:11:linear").unwrap();
        assert_eq!(linear.powers()[1], 1.0);
    }
}

//! End-to-end tests of the `sdapd` binary and the file emitters.

use std::fs;
use std::path::Path;
use std::process::Command;

use sdapd_cli::{
    emit_features_json, emit_report_json, sweep_csv, DefaultsPolicy, Versioned,
};
use sdapd_core::audit::{run_audit, AuditReport, MonitorSpec};
use sdapd_core::config::DetectorConfig;
use sdapd_core::sweep::{log_grid, run_sweep, SweepFeatures};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdapd"))
}

#[test]
fn sweep_csv_header_and_ordering() {
    let cfg = DetectorConfig::paper_default();
    let grid = log_grid(1.0e-9, 1.0e-4, 11).unwrap();
    let sweep = run_sweep(&cfg, &grid, 20_000, 5).unwrap();
    let csv = sweep_csv(&sweep);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "power_w,count_rate_hz,std_error_hz,photocurrent_a,voltage_drop_v,excess_bias_v,sigma_i0,eta,converged"
    );
    let powers: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(powers.len(), 11);
    assert!(powers.windows(2).all(|w| w[0] < w[1]));

    // Full round-trip precision: the parsed power equals the input.
    for (parsed, original) in powers.iter().zip(&grid) {
        assert_eq!(parsed, original);
    }
}

#[test]
fn features_and_report_json_round_trip() {
    let cfg = DetectorConfig::paper_default();
    let grid = log_grid(1.0e-9, 1.0e-4, 9).unwrap();
    let sweep = run_sweep(&cfg, &grid, 20_000, 9).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let fpath = dir.path().join("features.json");
    emit_features_json(&sweep.features, &fpath).unwrap();
    let text = fs::read_to_string(&fpath).unwrap();
    let parsed: Versioned<SweepFeatures> = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.schema_version, 1);
    assert_eq!(parsed.payload, sweep.features);

    let report = run_audit(
        &[cfg],
        &[&sweep],
        Some(MonitorSpec {
            sense_resistor: 1.0e3,
            alarm_current: 1.0e-4,
        }),
    )
    .unwrap();
    let rpath = dir.path().join("audit.json");
    emit_report_json(&report, &rpath).unwrap();
    let text = fs::read_to_string(&rpath).unwrap();
    let parsed: Versioned<AuditReport> = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.payload, report);
}

#[test]
fn sweep_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path, seed: &str| {
        let status = bin()
            .args([
                "sweep",
                "--defaults",
                "paper",
                "--grid",
                "1e-9:1e-4:9:log",
                "--gates",
                "20000",
                "--seed",
                seed,
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, "7");
    run(&b, "7");
    let csv_a = fs::read(a.join("sweep.csv")).unwrap();
    let csv_b = fs::read(b.join("sweep.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(
        fs::read(a.join("features.json")).unwrap(),
        fs::read(b.join("features.json")).unwrap()
    );
}

#[test]
fn plot_data_flag_emits_two_columns() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "sweep",
            "--defaults",
            "paper",
            "--grid",
            "1e-9:1e-6:5:log",
            "--gates",
            "5000",
            "--plot-data",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let dat = fs::read_to_string(dir.path().join("sweep.dat")).unwrap();
    for line in dat.lines() {
        assert_eq!(line.split_whitespace().count(), 2, "{line}");
    }
    assert_eq!(dat.lines().count(), 5);
}

#[test]
fn missing_config_without_defaults_fails_with_one_line() {
    let out = bin().args(["sweep"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error:"), "{stderr}");
}

#[test]
fn invalid_config_value_fails_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "eta0 = 1.5\n").unwrap();
    let out = bin()
        .args(["sweep", "--defaults", "paper", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("eta0"), "{stderr}");
}

#[test]
fn strict_parsing_requires_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("partial.cfg");
    fs::write(&cfg, "eta0 = 0.028\nsigma0 = 0.64\n").unwrap();
    // Without --defaults paper the partial file is an error.
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing key"), "{stderr}");

    // Library-level check of the same policy.
    assert!(sdapd_cli::parse_config(&cfg, DefaultsPolicy::Strict).is_err());
    assert!(sdapd_cli::parse_config(&cfg, DefaultsPolicy::Paper).is_ok());
}

#[test]
fn simulate_prints_parsable_json() {
    let out = bin()
        .args([
            "simulate",
            "--defaults",
            "paper",
            "--power",
            "1e-6",
            "--gates",
            "10000",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert!(doc["count_rate_hz"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["gates"], 10_000);
}

//! `sdapd` — simulate a gigahertz-gated self-differencing APD under bright
//! CW illumination and audit detector configurations against blinding
//! best-practice criteria.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sdapd_cli::{
    emit_features_json, emit_report_json, emit_sweep_csv, parse_config, plot_data, DefaultsPolicy,
    GridSpec, ResolvedConfig, RunManifest,
};
use sdapd_core::audit::{run_audit, MonitorSpec};
use sdapd_core::config::DetectorConfig;
use sdapd_core::feedback::SolverOptions;
use sdapd_core::simulator::simulate_power_point;
use sdapd_core::sweep::{run_sweep_with, FeatureOptions, SweepResult};

#[derive(Parser)]
#[command(
    name = "sdapd",
    about = "Self-differencing APD blinding simulator and best-practice auditor",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Detector configuration file(s) (key = value lines).
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    /// Fill keys missing from the config file with the paper-default
    /// profile. Accepts the single value `paper`.
    #[arg(long = "defaults", value_parser = ["paper"])]
    defaults: Option<String>,
    /// Gates simulated per power point.
    #[arg(long = "gates", default_value_t = 1_000_000)]
    gates: u64,
    /// Base RNG seed; per-point seeds derive as seed XOR point index.
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long = "out")]
    out: Option<PathBuf>,
    /// Count rate at or below which a point counts as blinded, Hz.
    #[arg(long = "blind-threshold", default_value_t = 1.0e3)]
    blind_threshold: f64,
    /// Worker threads for sweep points (default: all cores).
    #[arg(long = "jobs")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single power point and print the result as JSON.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Incident optical power, W.
        #[arg(long = "power")]
        power: f64,
    },
    /// Run a power sweep and emit CSV / feature JSON.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Power grid as pmin:pmax:n:(log|linear). Default 1e-12:1e-2:81:log.
        #[arg(long = "grid")]
        grid: Option<String>,
        /// Also emit two-column (power, count rate) plot data.
        #[arg(long = "plot-data")]
        plot_data: bool,
    },
    /// Audit one or more detector configs against the best-practice
    /// criteria. Exit code: 0 all pass, 2 any failure, 3 pass with
    /// not-applicable criteria.
    Audit {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long = "grid")]
        grid: Option<String>,
        /// Sense resistor of the photocurrent monitor, Ohm.
        #[arg(long = "monitor-resistor")]
        monitor_resistor: Option<f64>,
        /// Alarm current of the photocurrent monitor, A.
        #[arg(long = "alarm-current")]
        alarm_current: Option<f64>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            // Single-line machine-parsable diagnostic.
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common, power } => simulate_cmd(&common, power),
        Command::Sweep {
            common,
            grid,
            plot_data,
        } => sweep_cmd(&common, grid.as_deref(), plot_data),
        Command::Audit {
            common,
            grid,
            monitor_resistor,
            alarm_current,
        } => audit_cmd(&common, grid.as_deref(), monitor_resistor, alarm_current),
    }
}

fn policy(common: &CommonOpts) -> DefaultsPolicy {
    match common.defaults.as_deref() {
        Some("paper") => DefaultsPolicy::Paper,
        _ => DefaultsPolicy::Strict,
    }
}

fn load_configs(common: &CommonOpts) -> Result<Vec<ResolvedConfig>> {
    if common.configs.is_empty() {
        if policy(common) == DefaultsPolicy::Paper {
            return Ok(vec![ResolvedConfig {
                config: DetectorConfig::paper_default(),
                defaulted_keys: vec!["<all>".into()],
                disc_mv: None,
            }]);
        }
        bail!("no --config given (pass --defaults paper to run the paper profile)");
    }
    common
        .configs
        .iter()
        .map(|p| parse_config(p, policy(common)).map_err(anyhow::Error::from))
        .collect()
}

fn grid_spec(spec: Option<&str>) -> Result<GridSpec> {
    match spec {
        None => Ok(GridSpec::default()),
        Some(s) => GridSpec::parse(s).map_err(|e| anyhow::anyhow!(e)),
    }
}

fn out_dir(common: &CommonOpts) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn with_thread_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building worker pool")?;
            Ok(pool.install(f))
        }
    }
}

fn run_one_sweep(
    config: &DetectorConfig,
    grid: &GridSpec,
    common: &CommonOpts,
) -> Result<SweepResult> {
    let features = FeatureOptions {
        blind_threshold: common.blind_threshold,
        ..FeatureOptions::default()
    };
    run_sweep_with(
        config,
        &grid.powers(),
        common.gates,
        common.seed,
        &SolverOptions::default(),
        &features,
    )
    .map_err(anyhow::Error::from)
}

fn simulate_cmd(common: &CommonOpts, power: f64) -> Result<ExitCode> {
    let configs = load_configs(common)?;
    if configs.len() != 1 {
        bail!("simulate takes exactly one --config");
    }
    let config = &configs[0].config;
    let (op, chain) = simulate_power_point(power, config, common.gates, common.seed)?;
    let doc = serde_json::json!({
        "schema_version": 1,
        "power_w": power,
        "operating_point": op,
        "counts": chain.counts,
        "gates": chain.gates,
        "count_rate_hz": chain.count_rate(config),
        "std_error_hz": chain.std_error(config),
        "seed": chain.seed,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(common: &CommonOpts, grid: Option<&str>, emit_plot: bool) -> Result<ExitCode> {
    let configs = load_configs(common)?;
    if configs.len() != 1 {
        bail!("sweep takes exactly one --config");
    }
    let grid = grid_spec(grid)?;
    let dir = out_dir(common)?;

    let sweep = with_thread_pool(common.jobs, || {
        run_one_sweep(&configs[0].config, &grid, common)
    })??;

    emit_sweep_csv(&sweep, &dir.join("sweep.csv"))
        .with_context(|| format!("writing {}", dir.join("sweep.csv").display()))?;
    emit_features_json(&sweep.features, &dir.join("features.json"))
        .with_context(|| format!("writing {}", dir.join("features.json").display()))?;
    write_manifest(&dir, "sweep", &grid, common, &configs)?;
    if emit_plot {
        std::fs::write(dir.join("sweep.dat"), plot_data(&sweep))
            .with_context(|| format!("writing {}", dir.join("sweep.dat").display()))?;
    }

    let failed = sweep.points.iter().filter(|p| p.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} points failed to converge", sweep.points.len());
    }
    println!(
        "sweep: {} points, {} blinding gap(s), results in {}",
        sweep.points.len(),
        sweep.features.blinding_gaps.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn audit_cmd(
    common: &CommonOpts,
    grid: Option<&str>,
    monitor_resistor: Option<f64>,
    alarm_current: Option<f64>,
) -> Result<ExitCode> {
    let configs = load_configs(common)?;
    let grid = grid_spec(grid)?;
    let dir = out_dir(common)?;

    let monitor = match (monitor_resistor, alarm_current) {
        (Some(sense_resistor), Some(alarm_current)) => Some(MonitorSpec {
            sense_resistor,
            alarm_current,
        }),
        (None, None) => None,
        _ => bail!("--monitor-resistor and --alarm-current must be given together"),
    };

    let sweeps: Vec<SweepResult> = with_thread_pool(common.jobs, || {
        configs
            .iter()
            .map(|c| run_one_sweep(&c.config, &grid, common))
            .collect::<Result<Vec<_>>>()
    })??;
    let sweep_refs: Vec<&SweepResult> = sweeps.iter().collect();
    let detector_configs: Vec<DetectorConfig> =
        configs.iter().map(|c| c.config.clone()).collect();

    let report = run_audit(&detector_configs, &sweep_refs, monitor)?;
    emit_report_json(&report, &dir.join("audit.json"))
        .with_context(|| format!("writing {}", dir.join("audit.json").display()))?;
    write_manifest(&dir, "audit", &grid, common, &configs)?;

    for criterion in &report.criteria {
        println!(
            "{}: {:<14} {}",
            criterion.id,
            format!("{:?}", criterion.verdict),
            criterion.title
        );
    }
    println!(
        "overall: {}",
        if report.overall_pass { "pass" } else { "fail" }
    );

    if !report.overall_pass {
        Ok(ExitCode::from(2))
    } else if report.any_not_applicable() {
        Ok(ExitCode::from(3))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn write_manifest(
    dir: &Path,
    command: &str,
    grid: &GridSpec,
    common: &CommonOpts,
    configs: &[ResolvedConfig],
) -> Result<()> {
    let manifest = RunManifest {
        command,
        grid: *grid,
        n_gates: common.gates,
        seed: common.seed,
        blind_threshold_hz: common.blind_threshold,
        seed_derivation: "per-point seed = base seed XOR point index",
        configs: configs.iter().collect(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

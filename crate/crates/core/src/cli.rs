//! Experiment driver behind the `d2d-power` binary.
//!
//! Every command resolves a [`SimConfig`], writes its results into the
//! output directory and finishes with a `manifest.json` holding the
//! resolved config, the crate version and every seed used.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{parse_config, to_text, ConfigError};
use crate::controller::Policy;
use crate::mdp::{build_quantized_mdp, compare_priority, relative_value_iteration, MdpSpec};
use crate::priority::{build_per_flow_with, FlowParams};
use crate::sim::{monte_carlo, MonteCarloResult, SimConfig};
use crate::topology::path_gain;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Run,
    Sweep,
    Oracle,
    PriorityTable,
}

/// Swept quantity of the `sweep` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Mean arrival rate, Mbps.
    ArrivalRate,
    /// Power weight `γ`, applied to every flow.
    AvgPowerWeight,
    /// D2D range, metres.
    D2dRange,
    /// Carrier-sensing distance, metres.
    SensingDistance,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::ArrivalRate => "arrival_rate",
            SweepAxis::AvgPowerWeight => "avg_power_weight",
            SweepAxis::D2dRange => "d2d_range",
            SweepAxis::SensingDistance => "sensing_distance",
        }
    }

    pub fn apply(self, cfg: &mut SimConfig, value: f64) {
        match self {
            SweepAxis::ArrivalRate => cfg.mean_arrival_bps = value * 1e6,
            SweepAxis::AvgPowerWeight => cfg.gamma = value,
            SweepAxis::D2dRange => cfg.topology.d2d_range_m = value,
            SweepAxis::SensingDistance => cfg.topology.sensing_distance_m = value,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            SweepAxis::ArrivalRate,
            SweepAxis::AvgPowerWeight,
            SweepAxis::D2dRange,
            SweepAxis::SensingDistance,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| {
            format!(
                "unknown sweep axis '{s}' (expected arrival_rate, avg_power_weight, d2d_range or sensing_distance)"
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    /// `key=value` overrides, applied after the config file.
    pub overrides: Vec<String>,
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.command == Command::Sweep {
            if self.axis.is_none() {
                return Err(CliError::Usage("sweep needs --axis".into()));
            }
            if self.values.is_empty() {
                return Err(CliError::Usage("sweep needs at least one value".into()));
            }
            if self.values.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(CliError::Usage(
                    "sweep values must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'a str,
    command: Command,
    config: &'a SimConfig,
    config_text: String,
    base_seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sweeps: Vec<SweepSeeds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    axis: Option<SweepAxis>,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SweepSeeds {
    sweep_value: Option<f64>,
    topology_seeds: Vec<u64>,
    episode_seeds: Vec<u64>,
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(out: &Path, m: &Manifest) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(m).map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
    write(&out.join("manifest.json"), &(text + "\n"))
}

/// Per-policy rows shared by `run` and `sweep` output.
pub const SUMMARY_HEADER: &str =
    "sweep_value,policy,mean_delay,stderr_delay,mean_power,stderr_power\n";

fn summary_rows(out: &mut String, value: &str, mc: &MonteCarloResult) {
    for s in &mc.policies {
        let _ = writeln!(
            out,
            "{value},{},{},{},{},{}",
            s.policy, s.mean_delay_s, s.stderr_delay_s, s.mean_power_w, s.stderr_power_w
        );
    }
}

/// Executes one command. Returns the paths written.
pub fn run(spec: &RunSpec) -> Result<Vec<PathBuf>, CliError> {
    spec.validate()?;
    let cfg = parse_config(spec.config.as_deref(), &spec.overrides)?;
    std::fs::create_dir_all(&spec.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", spec.out.display())))?;
    match spec.command {
        Command::Run => run_single(spec, &cfg),
        Command::Sweep => run_sweep(spec, &cfg),
        Command::Oracle => run_oracle(spec, &cfg),
        Command::PriorityTable => run_priority_table(spec, &cfg),
    }
}

fn run_single(spec: &RunSpec, cfg: &SimConfig) -> Result<Vec<PathBuf>, CliError> {
    let mc =
        monte_carlo(cfg, &Policy::ALL, cfg.seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut summary = String::from(SUMMARY_HEADER);
    summary_rows(&mut summary, "", &mc);
    let episodes = spec.out.join("episodes.csv");
    let summary_path = spec.out.join("summary.csv");
    write(&episodes, &mc.episodes_csv())?;
    write(&summary_path, &summary)?;
    write_manifest(
        &spec.out,
        &Manifest {
            version: VERSION,
            command: spec.command,
            config: cfg,
            config_text: to_text(cfg),
            base_seed: cfg.seed,
            sweeps: vec![SweepSeeds {
                sweep_value: None,
                topology_seeds: mc.topology_seeds.clone(),
                episode_seeds: mc.episode_seeds.clone(),
            }],
            axis: None,
            outputs: vec!["episodes.csv".into(), "summary.csv".into()],
        },
    )?;
    Ok(vec![episodes, summary_path, spec.out.join("manifest.json")])
}

/// Runs every policy at each sweep value and writes `sweep_<axis>.csv`.
/// The CSV is rewritten after each value, so completed values survive a
/// later failure.
pub fn run_sweep(spec: &RunSpec, cfg: &SimConfig) -> Result<Vec<PathBuf>, CliError> {
    spec.validate()?;
    let axis = spec.axis.expect("validated");
    let csv_name = format!("sweep_{}.csv", axis.name());
    let csv_path = spec.out.join(&csv_name);
    let mut csv = String::from(SUMMARY_HEADER);
    let mut seeds = Vec::new();
    let mut failure = None;
    for &value in &spec.values {
        let mut point = cfg.clone();
        axis.apply(&mut point, value);
        let result = point
            .validate()
            .map_err(|e| CliError::Config(ConfigError::Validation(e.to_string())))
            .and_then(|_| {
                monte_carlo(&point, &Policy::ALL, point.seed)
                    .map_err(|e| CliError::Runtime(format!("{} = {value}: {e}", axis.name())))
            });
        match result {
            Ok(mc) => {
                summary_rows(&mut csv, &value.to_string(), &mc);
                write(&csv_path, &csv)?;
                seeds.push(SweepSeeds {
                    sweep_value: Some(value),
                    topology_seeds: mc.topology_seeds,
                    episode_seeds: mc.episode_seeds,
                });
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    write_manifest(
        &spec.out,
        &Manifest {
            version: VERSION,
            command: spec.command,
            config: cfg,
            config_text: to_text(cfg),
            base_seed: cfg.seed,
            sweeps: seeds,
            axis: Some(axis),
            outputs: vec![csv_name],
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(vec![csv_path, spec.out.join("manifest.json")]),
    }
}

/// The scaled-down one-flow instance used by the `oracle` command, with
/// weights and SINR gap taken from `cfg`.
pub fn oracle_spec(cfg: &SimConfig) -> MdpSpec {
    MdpSpec {
        beta: vec![cfg.beta],
        gamma: vec![cfg.gamma],
        sinr_gap: cfg.sinr_gap,
        ..MdpSpec::single_flow(1.0, 1e6, 1000.0)
    }
}

fn run_oracle(spec: &RunSpec, cfg: &SimConfig) -> Result<Vec<PathBuf>, CliError> {
    let ms = oracle_spec(cfg);
    let mdp = build_quantized_mdp(&ms).map_err(|e| CliError::Runtime(e.to_string()))?;
    let rvi = relative_value_iteration(&mdp, 1e-9, 100_000)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let fp = FlowParams {
        beta: ms.beta[0],
        gamma: ms.gamma[0],
        lambda: ms.arrival_bps[0] / ms.bandwidth_hz,
        direct_gain: ms.direct_gain[0],
        noise: ms.noise,
        sinr_gap: ms.sinr_gap,
        reuse_count: 1,
    };
    let pf = build_per_flow_with(fp, cfg.q_max_slots * fp.lambda, cfg.table_points)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let cmp = compare_priority(&mdp, &rvi, &pf).map_err(|e| CliError::Runtime(e.to_string()))?;
    let unit = ms.packet_bits / (ms.bandwidth_hz * ms.slot_s);
    let mut values = String::from("q_packets,V,J\n");
    for (q, v) in rvi.v.iter().enumerate() {
        let _ = writeln!(values, "{q},{v},{}", pf.value(q as f64 * unit));
    }
    let report = format!(
        "sweeps = {}, span = {:e}\n{}",
        rvi.sweeps,
        rvi.span,
        cmp.report()
    );
    let values_path = spec.out.join("oracle_values.csv");
    let policy_path = spec.out.join("oracle_policy.csv");
    let report_path = spec.out.join("oracle_report.txt");
    write(&values_path, &values)?;
    write(&policy_path, &rvi.to_csv(&mdp))?;
    write(&report_path, &report)?;
    write_manifest(
        &spec.out,
        &Manifest {
            version: VERSION,
            command: spec.command,
            config: cfg,
            config_text: to_text(cfg),
            base_seed: cfg.seed,
            sweeps: Vec::new(),
            axis: None,
            outputs: vec![
                "oracle_values.csv".into(),
                "oracle_policy.csv".into(),
                "oracle_report.txt".into(),
            ],
        },
    )?;
    Ok(vec![values_path, policy_path, report_path])
}

/// Flow used by the `priority-table` command: mean arrival rate, a link
/// at the D2D range, no sensing neighbours.
pub fn table_flow(cfg: &SimConfig) -> Result<FlowParams, CliError> {
    let gain = path_gain(cfg.topology.d2d_range_m, cfg.topology.path_loss)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(FlowParams {
        beta: cfg.beta,
        gamma: cfg.gamma,
        lambda: cfg.mean_arrival_bps / cfg.bandwidth_hz,
        direct_gain: gain,
        noise: cfg.noise_w(),
        sinr_gap: cfg.sinr_gap,
        reuse_count: 1,
    })
}

fn run_priority_table(spec: &RunSpec, cfg: &SimConfig) -> Result<Vec<PathBuf>, CliError> {
    let fp = table_flow(cfg)?;
    let pf = build_per_flow_with(fp, cfg.q_max_slots * fp.lambda, cfg.table_points)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let path = spec.out.join("priority_table.csv");
    pf.write_csv(&path)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_manifest(
        &spec.out,
        &Manifest {
            version: VERSION,
            command: spec.command,
            config: cfg,
            config_text: to_text(cfg),
            base_seed: cfg.seed,
            sweeps: Vec::new(),
            axis: None,
            outputs: vec!["priority_table.csv".into()],
        },
    )?;
    Ok(vec![path, spec.out.join("manifest.json")])
}

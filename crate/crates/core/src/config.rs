//! Flat `key = value` configuration files.
//!
//! ```text
//! # comments start with '#'
//! topology.num_pairs = 10
//! traffic.mean_arrival_bps = 5e6
//! power.gamma = 1
//! ```
//!
//! Every key is `section.name`. Omitted keys keep their defaults (see
//! [`SimConfig::default`]). Overrides given as `key=value` are applied
//! after the file, and a bare `name` is accepted when it identifies exactly
//! one key, so `seed=7` means `sim.seed=7`.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::sim::SimConfig;
use crate::topology::PathLossModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("cannot read {path}: {err}")]
    Io { path: String, err: std::io::Error },
}

/// All recognised keys, in the order they are written by [`to_text`].
pub const KEYS: &[&str] = &[
    "topology.num_pairs",
    "topology.cell_radius_m",
    "topology.d2d_range_m",
    "topology.sensing_distance_m",
    "topology.path_loss_intercept_db",
    "topology.path_loss_slope_db",
    "traffic.mean_arrival_bps",
    "traffic.arrival_spread",
    "traffic.packet_bits",
    "channel.bandwidth_hz",
    "channel.noise_density_dbm_hz",
    "channel.sinr_gap",
    "power.beta",
    "power.gamma",
    "power.p_max_dbm",
    "controller.p_cap_factor",
    "controller.eps_factor",
    "controller.max_iters",
    "controller.w_csi",
    "controller.queue_weight_scale",
    "priority.q_max_slots",
    "priority.table_points",
    "priority.q_clamp",
    "priority.coupling",
    "sim.slot_s",
    "sim.horizon_slots",
    "sim.warmup_fraction",
    "sim.num_topologies",
    "sim.seed",
];

fn resolve_key(key: &str) -> Result<&'static str, String> {
    if let Some(k) = KEYS.iter().find(|k| **k == key) {
        return Ok(k);
    }
    if !key.contains('.') {
        let matches: Vec<&&str> = KEYS
            .iter()
            .filter(|k| k.rsplit('.').next() == Some(key))
            .collect();
        if matches.len() == 1 {
            return Ok(matches[0]);
        }
    }
    Err(format!("unknown key '{key}'"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("{key}: cannot parse '{value}' as a number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got '{value}'")),
    }
}

fn log_distance(cfg: &SimConfig) -> (f64, f64) {
    match cfg.topology.path_loss {
        PathLossModel::LogDistanceDb {
            intercept_db,
            slope_db,
        } => (intercept_db, slope_db),
        PathLossModel::Friis { .. } => (15.3, 37.6),
    }
}

/// Sets one key. Values are validated as a whole later.
pub fn set_key(cfg: &mut SimConfig, key: &str, value: &str) -> Result<(), String> {
    let key = resolve_key(key)?;
    let t = &mut cfg.topology;
    match key {
        "topology.num_pairs" => t.num_pairs = parse_num(key, value)?,
        "topology.cell_radius_m" => t.cell_radius_m = parse_num(key, value)?,
        "topology.d2d_range_m" => t.d2d_range_m = parse_num(key, value)?,
        "topology.sensing_distance_m" => t.sensing_distance_m = parse_num(key, value)?,
        "topology.path_loss_intercept_db" | "topology.path_loss_slope_db" => {
            let (mut intercept_db, mut slope_db) = log_distance(cfg);
            if key.ends_with("intercept_db") {
                intercept_db = parse_num(key, value)?;
            } else {
                slope_db = parse_num(key, value)?;
            }
            cfg.topology.path_loss = PathLossModel::LogDistanceDb {
                intercept_db,
                slope_db,
            };
        }
        "traffic.mean_arrival_bps" => cfg.mean_arrival_bps = parse_num(key, value)?,
        "traffic.arrival_spread" => cfg.arrival_spread = parse_num(key, value)?,
        "traffic.packet_bits" => cfg.packet_bits = parse_num(key, value)?,
        "channel.bandwidth_hz" => cfg.bandwidth_hz = parse_num(key, value)?,
        "channel.noise_density_dbm_hz" => cfg.noise_density_dbm_hz = parse_num(key, value)?,
        "channel.sinr_gap" => cfg.sinr_gap = parse_num(key, value)?,
        "power.beta" => cfg.beta = parse_num(key, value)?,
        "power.gamma" => cfg.gamma = parse_num(key, value)?,
        "power.p_max_dbm" => cfg.p_max_dbm = parse_num(key, value)?,
        "controller.p_cap_factor" => cfg.p_cap_factor = parse_num(key, value)?,
        "controller.eps_factor" => cfg.eps_factor = parse_num(key, value)?,
        "controller.max_iters" => cfg.max_iters = parse_num(key, value)?,
        "controller.w_csi" => cfg.w_csi = parse_num(key, value)?,
        "controller.queue_weight_scale" => cfg.queue_weight_scale = parse_num(key, value)?,
        "priority.q_max_slots" => cfg.q_max_slots = parse_num(key, value)?,
        "priority.table_points" => cfg.table_points = parse_num(key, value)?,
        "priority.q_clamp" => cfg.q_clamp = parse_num(key, value)?,
        "priority.coupling" => cfg.coupling = parse_bool(key, value)?,
        "sim.slot_s" => cfg.slot_s = parse_num(key, value)?,
        "sim.horizon_slots" => cfg.horizon_slots = parse_num(key, value)?,
        "sim.warmup_fraction" => cfg.warmup_fraction = parse_num(key, value)?,
        "sim.num_topologies" => cfg.num_topologies = parse_num(key, value)?,
        "sim.seed" => cfg.seed = parse_num(key, value)?,
        _ => unreachable!("key list and setter out of sync: {key}"),
    }
    Ok(())
}

fn split_assignment(text: &str) -> Result<(&str, &str), String> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| format!("expected 'key = value', got '{text}'"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || v.is_empty() {
        return Err(format!("expected 'key = value', got '{text}'"));
    }
    Ok((k, v))
}

/// Applies the lines of a config file to `cfg`.
pub fn apply_text(cfg: &mut SimConfig, text: &str, source_name: &str) -> Result<(), ConfigError> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        split_assignment(line)
            .and_then(|(k, v)| set_key(cfg, k, v))
            .map_err(|message| ConfigError::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                message,
            })?;
    }
    Ok(())
}

/// Defaults, then the file (if any), then each `key=value` override, then
/// validation.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|err| ConfigError::Io {
            path: p.display().to_string(),
            err,
        })?;
        apply_text(&mut cfg, &text, &p.display().to_string())?;
    }
    for (i, o) in overrides.iter().enumerate() {
        split_assignment(o)
            .and_then(|(k, v)| set_key(&mut cfg, k, v))
            .map_err(|message| ConfigError::Parse {
                source_name: "--set".to_string(),
                line: i + 1,
                message,
            })?;
    }
    cfg.validate()
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
    Ok(cfg)
}

/// The resolved configuration in the file format, one line per key.
pub fn to_text(cfg: &SimConfig) -> String {
    let (intercept, slope) = log_distance(cfg);
    let t = &cfg.topology;
    let values: Vec<String> = vec![
        t.num_pairs.to_string(),
        t.cell_radius_m.to_string(),
        t.d2d_range_m.to_string(),
        t.sensing_distance_m.to_string(),
        intercept.to_string(),
        slope.to_string(),
        cfg.mean_arrival_bps.to_string(),
        cfg.arrival_spread.to_string(),
        cfg.packet_bits.to_string(),
        cfg.bandwidth_hz.to_string(),
        cfg.noise_density_dbm_hz.to_string(),
        cfg.sinr_gap.to_string(),
        cfg.beta.to_string(),
        cfg.gamma.to_string(),
        cfg.p_max_dbm.to_string(),
        cfg.p_cap_factor.to_string(),
        cfg.eps_factor.to_string(),
        cfg.max_iters.to_string(),
        cfg.w_csi.to_string(),
        cfg.queue_weight_scale.to_string(),
        cfg.q_max_slots.to_string(),
        cfg.table_points.to_string(),
        cfg.q_clamp.to_string(),
        cfg.coupling.to_string(),
        cfg.slot_s.to_string(),
        cfg.horizon_slots.to_string(),
        cfg.warmup_fraction.to_string(),
        cfg.num_topologies.to_string(),
        cfg.seed.to_string(),
    ];
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        assert_eq!(parse_config(None, &[]).unwrap(), SimConfig::default());
        let mut cfg = SimConfig::default();
        apply_text(&mut cfg, "# nothing\n\n   \n", "empty").unwrap();
        assert_eq!(cfg, SimConfig::default());
    }

    #[test]
    fn seed_override_changes_only_seed() {
        let cfg = parse_config(None, &["seed=7".to_string()]).unwrap();
        assert_eq!(
            cfg,
            SimConfig {
                seed: 7,
                ..SimConfig::default()
            }
        );
    }

    #[test]
    fn negative_sensing_distance_names_the_key() {
        let err = parse_config(None, &["topology.sensing_distance_m=-5".to_string()]).unwrap_err();
        assert!(matches!(err, ConfigError::Validation(_)));
        assert!(err.to_string().contains("sensing_distance"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_and_key() {
        let mut cfg = SimConfig::default();
        let err = apply_text(&mut cfg, "power.gamma = 1\npower.gamma = x\n", "f.cfg").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.starts_with("f.cfg:2:") && msg.contains("power.gamma"),
            "{msg}"
        );
        let err = apply_text(&mut cfg, "bogus.key = 1", "f.cfg").unwrap_err();
        assert!(err.to_string().contains("bogus.key"));
        let err = apply_text(&mut cfg, "no equals sign", "f.cfg").unwrap_err();
        assert!(err.to_string().contains("key = value"));
    }

    #[test]
    fn text_round_trip() {
        let cfg = SimConfig {
            gamma: 0.125,
            coupling: false,
            seed: 99,
            ..SimConfig::default()
        };
        let mut back = SimConfig::default();
        apply_text(&mut back, &to_text(&cfg), "echo").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_settable() {
        for k in KEYS {
            let mut cfg = SimConfig::default();
            let v = if k.ends_with("coupling") {
                "false"
            } else {
                "3"
            };
            set_key(&mut cfg, k, v).unwrap();
        }
    }

    #[test]
    fn ambiguous_short_key_rejected() {
        // no two keys share a suffix today; an unknown short name must fail
        assert!(resolve_key("nonexistent").is_err());
        assert_eq!(resolve_key("gamma").unwrap(), "power.gamma");
    }
}

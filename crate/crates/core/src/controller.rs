//! Per-slot power decisions.
//!
//! The proposed controller maximises `Σ_k w_k σ_k C_k(H, P) − γ_k P_k` with
//! `w_k = ∂Ṽ/∂Q_k` by a fixed-point water-filling iteration. Each node's
//! power is single-user water-filling against its current interference,
//! with a tax `ζ_k` for the rate it costs the other active links:
//!
//! ```text
//! P_k ← ( w_k / (ln2 (γ_k + ζ_k)) − Γ I_k / H_kk )^+
//! I_k = N0 + Σ_{j active, j≠k} H_kj P_j
//! ζ_k = Σ_{j active, j≠k} w_j H_jj P_j H_jk / (ln2 · I_j (Γ I_j + H_jj P_j))
//! ```
//!
//! The baselines reuse the same iteration with other weights, or fixed
//! power, or a round-robin relay through the base station.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::topology::{path_gain, PathLossModel, Topology, TopologyError, MIN_LINK_DISTANCE_M};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Proposed,
    /// Round-robin TDMA relayed through the base station.
    CellularTdma,
    FixedMaxPower,
    /// Water-filling with constant weights (rate maximisation).
    CsiOnly,
    /// Water-filling with weights proportional to queue length.
    QueueWeighted,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Proposed,
        Policy::CellularTdma,
        Policy::FixedMaxPower,
        Policy::CsiOnly,
        Policy::QueueWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Proposed => "proposed",
            Policy::CellularTdma => "cellular_tdma",
            Policy::FixedMaxPower => "fixed_max_power",
            Policy::CsiOnly => "csi_only",
            Policy::QueueWeighted => "queue_weighted",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Policy::ALL.iter().map(|p| p.name()).collect();
                format!(
                    "unknown policy '{s}' (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub policy: Policy,
    /// Maximum transmit power, watts. Fixed-power and cellular baselines
    /// transmit at this level.
    pub p_max: f64,
    /// Safety cap on water-filling iterates, watts.
    pub p_cap: f64,
    pub eps_converge: f64,
    pub max_iters: usize,
    /// Constant weight of the CSI-only baseline.
    pub w_csi: f64,
    /// Queue-weighted baseline uses `w_k = scale · γ_k · Q_k` with `Q_k`
    /// in bits/(W τ).
    pub queue_weight_scale: f64,
    /// Noise power, watts.
    pub noise: f64,
    pub sinr_gap: f64,
    /// Keep per-iteration snapshots in [`PowerDecision::history`].
    pub record_history: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let p_max = 0.2;
        Self {
            policy: Policy::Proposed,
            p_max,
            p_cap: 10.0 * p_max,
            eps_converge: 1e-6 * p_max,
            max_iters: 100,
            w_csi: 1.0,
            queue_weight_scale: LN2,
            noise: 3.981_071_705_534_969e-14,
            sinr_gap: 1.0,
            record_history: false,
        }
    }
}

impl ControllerConfig {
    pub fn with_policy(self, policy: Policy) -> Self {
        Self { policy, ..self }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        if !(self.p_max > 0.0) {
            bad.push(format!("p_max must be > 0, got {}", self.p_max));
        }
        if !(self.p_cap > 0.0) {
            bad.push(format!("p_cap must be > 0, got {}", self.p_cap));
        }
        if !(self.eps_converge > 0.0) {
            bad.push(format!(
                "eps_converge must be > 0, got {}",
                self.eps_converge
            ));
        }
        if self.max_iters < 1 {
            bad.push("max_iters must be >= 1".into());
        }
        if !(self.w_csi >= 0.0) {
            bad.push(format!("w_csi must be >= 0, got {}", self.w_csi));
        }
        if !(self.queue_weight_scale >= 0.0) {
            bad.push(format!(
                "queue_weight_scale must be >= 0, got {}",
                self.queue_weight_scale
            ));
        }
        if !(self.noise > 0.0) {
            bad.push(format!("noise must be > 0, got {}", self.noise));
        }
        if !(self.sinr_gap >= 1.0) {
            bad.push(format!("sinr_gap must be >= 1, got {}", self.sinr_gap));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }
}

/// State of the iteration after one update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationSnapshot {
    pub power: Vec<f64>,
    pub interference: Vec<f64>,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerDecision {
    pub power: Vec<f64>,
    pub iters_used: usize,
    pub converged: bool,
    /// `max_k |P_k(n+1) − P_k(n)|` on the last update.
    pub final_residual: f64,
    /// Components clipped at the power cap on the last update.
    pub cap_hits: usize,
    /// `I_k` and `ζ_k` used for the last update.
    pub interference: Vec<f64>,
    pub zeta: Vec<f64>,
    pub history: Vec<IterationSnapshot>,
}

impl PowerDecision {
    fn fixed(power: Vec<f64>) -> Self {
        let k = power.len();
        Self {
            power,
            iters_used: 0,
            converged: true,
            final_residual: 0.0,
            cap_hits: 0,
            interference: vec![0.0; k],
            zeta: vec![0.0; k],
            history: Vec::new(),
        }
    }
}

/// Interference plus noise at every receiver from the active transmitters.
pub fn interference(h: &[Vec<f64>], sigma: &[bool], power: &[f64], noise: f64) -> Vec<f64> {
    let k = sigma.len();
    (0..k)
        .map(|a| {
            noise
                + (0..k)
                    .filter(|&j| j != a && sigma[j])
                    .map(|j| h[a][j] * power[j])
                    .sum::<f64>()
        })
        .collect()
}

/// `C_k = log2(1 + H_kk P_k / (Γ I_k))` for active links, zero otherwise.
pub fn rates(h: &[Vec<f64>], sigma: &[bool], power: &[f64], noise: f64, sinr_gap: f64) -> Vec<f64> {
    let inter = interference(h, sigma, power, noise);
    (0..sigma.len())
        .map(|k| {
            if sigma[k] {
                (1.0 + h[k][k] * power[k] / (sinr_gap * inter[k])).log2()
            } else {
                0.0
            }
        })
        .collect()
}

/// `Σ_k (w_k σ_k C_k − γ_k P_k)`
pub fn per_stage_objective(
    h: &[Vec<f64>],
    sigma: &[bool],
    power: &[f64],
    weights: &[f64],
    gammas: &[f64],
    noise: f64,
    sinr_gap: f64,
) -> f64 {
    let c = rates(h, sigma, power, noise, sinr_gap);
    (0..sigma.len())
        .map(|k| weights[k] * c[k] - gammas[k] * power[k])
        .sum()
}

/// Proposed controller: the water-filling iteration driven by the
/// priority-function gradient `w`, capped at `cfg.p_cap`.
pub fn solve_power_proposed(
    h: &[Vec<f64>],
    sigma: &[bool],
    w: &[f64],
    gammas: &[f64],
    cfg: &ControllerConfig,
) -> PowerDecision {
    weighted_water_filling(h, sigma, w, gammas, cfg, cfg.p_cap)
}

/// The fixed-point iteration shared by the proposed controller and the
/// weighted baselines, starting from `P = 0`.
pub fn weighted_water_filling(
    h: &[Vec<f64>],
    sigma: &[bool],
    w: &[f64],
    gammas: &[f64],
    cfg: &ControllerConfig,
    cap: f64,
) -> PowerDecision {
    let k = sigma.len();
    let active: Vec<usize> = (0..k).filter(|&i| sigma[i]).collect();
    let mut power = vec![0.0; k];
    let mut inter = vec![cfg.noise; k];
    let mut zeta = vec![0.0; k];
    let mut history = Vec::new();
    // with at most one active link the first update is already the fixed point
    let coupled = active.len() > 1;

    let mut iters = 0;
    let mut residual = f64::INFINITY;
    let mut cap_hits = 0;
    let mut converged = false;
    while iters < cfg.max_iters {
        inter = interference(h, sigma, &power, cfg.noise);
        for &a in &active {
            zeta[a] = active
                .iter()
                .filter(|&&j| j != a)
                .map(|&j| {
                    let s = h[j][j] * power[j];
                    if s == 0.0 {
                        0.0
                    } else {
                        w[j] * s * h[j][a] / (LN2 * inter[j] * (cfg.sinr_gap * inter[j] + s))
                    }
                })
                .sum();
        }
        let mut next = vec![0.0; k];
        cap_hits = 0;
        for &a in &active {
            let p = if h[a][a] > 0.0 {
                (w[a] / (LN2 * (gammas[a] + zeta[a])) - cfg.sinr_gap * inter[a] / h[a][a]).max(0.0)
            } else {
                0.0
            };
            if p > cap {
                cap_hits += 1;
                next[a] = cap;
            } else {
                next[a] = p;
            }
        }
        residual = next
            .iter()
            .zip(&power)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        power = next;
        iters += 1;
        if cfg.record_history {
            history.push(IterationSnapshot {
                power: power.clone(),
                interference: inter.clone(),
                zeta: zeta.clone(),
            });
        }
        if residual < cfg.eps_converge || !coupled {
            converged = true;
            break;
        }
    }
    PowerDecision {
        power,
        iters_used: iters,
        converged,
        final_residual: residual,
        cap_hits,
        interference: inter,
        zeta,
        history,
    }
}

/// Fixed-power, CSI-only and queue-weighted baselines. `q_norm` holds queue
/// lengths in bits/(W τ).
pub fn solve_power_baseline(
    h: &[Vec<f64>],
    sigma: &[bool],
    q_norm: &[f64],
    gammas: &[f64],
    cfg: &ControllerConfig,
) -> Result<PowerDecision, String> {
    match cfg.policy {
        Policy::FixedMaxPower => Ok(PowerDecision::fixed(
            sigma
                .iter()
                .map(|&s| if s { cfg.p_max } else { 0.0 })
                .collect(),
        )),
        Policy::CsiOnly => {
            let w = vec![cfg.w_csi; sigma.len()];
            Ok(weighted_water_filling(h, sigma, &w, gammas, cfg, cfg.p_cap))
        }
        Policy::QueueWeighted => {
            let w: Vec<f64> = q_norm
                .iter()
                .zip(gammas)
                .map(|(q, g)| cfg.queue_weight_scale * g * q)
                .collect();
            Ok(weighted_water_filling(h, sigma, &w, gammas, cfg, cfg.p_cap))
        }
        other => Err(format!("{other} is not a per-slot power baseline")),
    }
}

/// Long-term gains of the two cellular hops, with the base station at the
/// origin.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseStationLinks {
    /// Transmitter `k` to the base station.
    pub uplink: Vec<f64>,
    /// Base station to receiver `k`.
    pub downlink: Vec<f64>,
}

impl BaseStationLinks {
    pub fn new(topology: &Topology, model: PathLossModel) -> Result<Self, TopologyError> {
        let gain = |p: [f64; 2]| {
            let d = (p[0] * p[0] + p[1] * p[1]).sqrt().max(MIN_LINK_DISTANCE_M);
            path_gain(d, model)
        };
        Ok(Self {
            uplink: topology
                .tx_positions
                .iter()
                .map(|&p| gain(p))
                .collect::<Result<_, _>>()?,
            downlink: topology
                .rx_positions
                .iter()
                .map(|&p| gain(p))
                .collect::<Result<_, _>>()?,
        })
    }
}

/// Index of the pair served in slot `t`.
pub fn round_robin_slot(t: u64, k: usize) -> usize {
    (t % k as u64) as usize
}

/// Cellular baseline: one pair per slot, relayed through the base station
/// at `p_max` on both hops. `h_up`/`h_down` are the faded hop gains for this
/// slot. Returns the per-pair rate in bits/s/Hz.
pub fn cellular_round_robin(
    t: u64,
    h_up: &[f64],
    h_down: &[f64],
    cfg: &ControllerConfig,
) -> Vec<f64> {
    let k = h_up.len();
    let mut out = vec![0.0; k];
    if k == 0 {
        return out;
    }
    let s = round_robin_slot(t, k);
    let snr = |g: f64| cfg.p_max * g / (cfg.sinr_gap * cfg.noise);
    let up = (1.0 + snr(h_up[s])).log2();
    let down = (1.0 + snr(h_down[s])).log2();
    // two half-duplex hops share the slot
    out[s] = 0.5 * up.min(down);
    out
}

/// One row per pair and slot: `t,k,sigma,power,weight,rate`.
#[derive(Debug, Clone, Default)]
pub struct DecisionTrace {
    csv: String,
}

impl DecisionTrace {
    pub fn new() -> Self {
        Self {
            csv: "t,k,sigma,power,weight,rate\n".to_string(),
        }
    }

    pub fn record(&mut self, t: u64, sigma: &[bool], power: &[f64], weight: &[f64], rate: &[f64]) {
        for k in 0..sigma.len() {
            let _ = writeln!(
                self.csv,
                "{t},{k},{},{},{},{}",
                sigma[k] as u8, power[k], weight[k], rate[k]
            );
        }
    }

    pub fn as_csv(&self) -> &str {
        &self.csv
    }
}

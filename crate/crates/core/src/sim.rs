//! Slotted simulation of the coupled queues and Monte Carlo evaluation.
//!
//! Each slot: the MAC picks the active set, fading and base-station hop
//! gains are drawn, the policy chooses powers, queues are served, and the
//! slot's arrivals are added afterwards (they cannot be served until the
//! next slot). All random draws come from per-purpose streams whose draw
//! counts do not depend on the policy, so every policy sees the same MAC
//! marks, fading and arrivals.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    cellular_round_robin, rates, solve_power_baseline, solve_power_proposed, BaseStationLinks,
    ControllerConfig, Policy,
};
use crate::mac::{sample_mac_output, MacOutput};
use crate::priority::{
    build_per_flow_with, priority_gradient, CouplingModel, FlowParams, PerFlowPriority,
    PriorityError,
};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::topology::{generate_topology, Topology, TopologyError, TopologyParams};
use crate::traffic::{
    draw_arrival_rates, sample_arrivals_unchecked, sample_csi, ArrivalSample, ChannelSample,
    TrafficParams,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Priority(#[from] PriorityError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub topology: TopologyParams,
    /// Mean of the per-flow arrival rates, bits/s.
    pub mean_arrival_bps: f64,
    /// Per-flow rates are uniform in `mean · [1 − spread, 1 + spread]`.
    pub arrival_spread: f64,
    pub packet_bits: u64,
    pub bandwidth_hz: f64,
    pub slot_s: f64,
    pub noise_density_dbm_hz: f64,
    pub sinr_gap: f64,
    /// Delay weight, identical for all flows.
    pub beta: f64,
    /// Power weight, identical for all flows.
    pub gamma: f64,
    pub p_max_dbm: f64,
    /// Water-filling cap as a multiple of `p_max`.
    pub p_cap_factor: f64,
    /// Convergence threshold as a multiple of `p_max`.
    pub eps_factor: f64,
    pub max_iters: usize,
    pub w_csi: f64,
    pub queue_weight_scale: f64,
    /// Priority table extent in mean arrivals per slot.
    pub q_max_slots: f64,
    pub table_points: usize,
    pub q_clamp: f64,
    /// Include the cross-flow coupling term in the proposed gradient.
    pub coupling: bool,
    pub horizon_slots: usize,
    /// Extra leading slots, as a fraction of the horizon, excluded from
    /// the averages.
    pub warmup_fraction: f64,
    pub num_topologies: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            topology: TopologyParams::default(),
            mean_arrival_bps: 5e6,
            arrival_spread: 0.5,
            packet_bits: 1000,
            bandwidth_hz: 10e6,
            slot_s: 1e-3,
            noise_density_dbm_hz: -174.0,
            sinr_gap: 1.0,
            beta: 1.0,
            gamma: 1.0,
            p_max_dbm: 23.0,
            p_cap_factor: 10.0,
            eps_factor: 1e-6,
            max_iters: 100,
            w_csi: 1.0,
            queue_weight_scale: std::f64::consts::LN_2,
            q_max_slots: 1e4,
            table_points: crate::priority::DEFAULT_TABLE_POINTS,
            q_clamp: crate::priority::DEFAULT_Q_CLAMP,
            coupling: true,
            horizon_slots: 1000,
            warmup_fraction: 0.1,
            num_topologies: 20,
            seed: 1,
        }
    }
}

impl SimConfig {
    /// Every violated invariant, or `Ok`.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut bad = Vec::new();
        if let Err(e) = self.topology.validate() {
            bad.push(e.to_string());
        }
        let positive = [
            ("traffic.mean_arrival_bps", self.mean_arrival_bps),
            ("channel.bandwidth_hz", self.bandwidth_hz),
            ("sim.slot_s", self.slot_s),
            ("power.beta", self.beta),
            ("power.gamma", self.gamma),
            ("controller.p_cap_factor", self.p_cap_factor),
            ("controller.eps_factor", self.eps_factor),
            ("priority.q_max_slots", self.q_max_slots),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                bad.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.arrival_spread) {
            bad.push(format!(
                "traffic.arrival_spread must be in [0, 1), got {}",
                self.arrival_spread
            ));
        }
        if self.packet_bits < 1 {
            bad.push("traffic.packet_bits must be >= 1".into());
        }
        if !(self.sinr_gap >= 1.0) {
            bad.push(format!(
                "channel.sinr_gap must be >= 1, got {}",
                self.sinr_gap
            ));
        }
        if !self.p_max_dbm.is_finite() || !self.noise_density_dbm_hz.is_finite() {
            bad.push("power.p_max_dbm and channel.noise_density_dbm_hz must be finite".into());
        }
        if self.max_iters < 1 {
            bad.push("controller.max_iters must be >= 1".into());
        }
        if !(self.w_csi >= 0.0) || !(self.queue_weight_scale >= 0.0) {
            bad.push("controller.w_csi and controller.queue_weight_scale must be >= 0".into());
        }
        if self.table_points < 2 {
            bad.push("priority.table_points must be >= 2".into());
        }
        if !(self.q_clamp > 1.0) {
            bad.push(format!(
                "priority.q_clamp must be > 1, got {}",
                self.q_clamp
            ));
        }
        if self.horizon_slots < 1 {
            bad.push("sim.horizon_slots must be >= 1".into());
        }
        if !(0.0..=10.0).contains(&self.warmup_fraction) {
            bad.push(format!(
                "sim.warmup_fraction must be in [0, 10], got {}",
                self.warmup_fraction
            ));
        }
        if self.num_topologies < 1 {
            bad.push("sim.num_topologies must be >= 1".into());
        }
        let max_packets = self.mean_arrival_bps * (1.0 + self.arrival_spread) * self.slot_s
            / self.packet_bits.max(1) as f64;
        if max_packets > crate::traffic::MAX_MEAN_PACKETS_PER_SLOT {
            bad.push(format!(
                "{max_packets:e} packets per slot is beyond the arrival guard"
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(bad.join("; ")))
        }
    }

    /// Noise power over the band, watts.
    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz) * self.bandwidth_hz
    }

    pub fn p_max_w(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    /// Bits carried in one slot by one bit/s/Hz.
    pub fn bits_per_rate_unit(&self) -> f64 {
        self.bandwidth_hz * self.slot_s
    }

    pub fn warmup_slots(&self) -> usize {
        (self.warmup_fraction * self.horizon_slots as f64).ceil() as usize
    }

    pub fn controller(&self, policy: Policy) -> ControllerConfig {
        let p_max = self.p_max_w();
        ControllerConfig {
            policy,
            p_max,
            p_cap: self.p_cap_factor * p_max,
            eps_converge: self.eps_factor * p_max,
            max_iters: self.max_iters,
            w_csi: self.w_csi,
            queue_weight_scale: self.queue_weight_scale,
            noise: self.noise_w(),
            sinr_gap: self.sinr_gap,
            record_history: false,
        }
    }

    /// Per-flow priority inputs for the given rates (bits/s).
    pub fn flow_params(&self, topology: &Topology, lambda_bps: &[f64]) -> Vec<FlowParams> {
        (0..topology.num_pairs())
            .map(|k| FlowParams {
                beta: self.beta,
                gamma: self.gamma,
                lambda: lambda_bps[k] / self.bandwidth_hz,
                direct_gain: topology.gain[k][k],
                noise: self.noise_w(),
                sinr_gap: self.sinr_gap,
                reuse_count: topology.reuse_count(k),
            })
            .collect()
    }
}

/// The global state seen by the controller in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub sigma: MacOutput,
    pub h: ChannelSample,
    /// Queue lengths, bits.
    pub q: Vec<f64>,
}

/// Bits actually removed from each queue: `min(Q_k, σ_k C_k W τ)`.
pub fn served_bits(
    q: &[f64],
    sigma: &[bool],
    c: &[f64],
    bandwidth_hz: f64,
    slot_s: f64,
) -> Vec<f64> {
    (0..q.len())
        .map(|k| {
            if sigma[k] {
                q[k].min(c[k] * bandwidth_hz * slot_s)
            } else {
                0.0
            }
        })
        .collect()
}

/// `Q_k' = max(Q_k − σ_k C_k W τ, 0) + A_k`
pub fn queue_step(
    q: &[f64],
    sigma: &[bool],
    c: &[f64],
    a: &ArrivalSample,
    bandwidth_hz: f64,
    slot_s: f64,
) -> Vec<f64> {
    (0..q.len())
        .map(|k| {
            let service = if sigma[k] {
                c[k] * bandwidth_hz * slot_s
            } else {
                0.0
            };
            (q[k] - service).max(0.0) + a.bits[k]
        })
        .collect()
}

/// `Σ_k (β_k Q_k/λ_k + γ_k P_k)`
pub fn stage_cost(q: &[f64], p: &[f64], beta: &[f64], gamma: &[f64], lambda: &[f64]) -> f64 {
    (0..q.len())
        .map(|k| beta[k] * q[k] / lambda[k] + gamma[k] * p[k])
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub policy: Policy,
    pub seed: u64,
    pub slots: usize,
    pub arrival_rates_bps: Vec<f64>,
    /// `D̄_k = (1/T) Σ_t Q_k(t)/λ_k`, seconds.
    pub avg_delay_s: Vec<f64>,
    /// `P̄_k`, watts.
    pub avg_power_w: Vec<f64>,
    pub mean_delay_s: f64,
    pub sum_delay_s: f64,
    pub mean_power_w: f64,
    /// `Σ_k (β D̄_k/τ + γ P̄_k)`, delay counted in slots.
    pub objective: f64,
    pub queue_mean_bits: Vec<f64>,
    pub queue_p95_bits: Vec<f64>,
    pub queue_max_bits: Vec<f64>,
    /// Mean total queue over measured slots `[T/4, T/2)` and `[T/2, T)`.
    pub queue_mean_second_quarter: f64,
    pub queue_mean_second_half: f64,
    pub solver_iters_mean: f64,
    pub nonconverged_slots: usize,
    pub cap_hits: usize,
    /// Totals over every simulated slot, warm-up included.
    pub arrived_bits: Vec<f64>,
    pub served_bits: Vec<f64>,
    pub final_queue_bits: Vec<f64>,
}

/// Per-slot record of the measured part of an episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    /// `Q(t)` at decision time, bits.
    pub queue: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<bool>>,
    pub weight: Vec<Vec<f64>>,
    pub rate: Vec<Vec<f64>>,
}

impl EpisodeTrace {
    /// `t,k,sigma,queue_bits,power,weight,rate`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,k,sigma,queue_bits,power,weight,rate\n");
        for t in 0..self.queue.len() {
            for k in 0..self.queue[t].len() {
                let _ = writeln!(
                    out,
                    "{t},{k},{},{},{},{},{}",
                    self.sigma[t][k] as u8,
                    self.queue[t][k],
                    self.power[t][k],
                    self.weight[t][k],
                    self.rate[t][k]
                );
            }
        }
        out
    }
}

/// Everything an episode needs that does not change from slot to slot.
struct EpisodeSetup {
    lambda_bps: Vec<f64>,
    traffic: TrafficParams,
    flows: Vec<PerFlowPriority>,
    coupling: CouplingModel,
    bs: BaseStationLinks,
}

fn setup_episode(
    cfg: &SimConfig,
    topology: &Topology,
    policy: Policy,
    seed: u64,
) -> Result<EpisodeSetup, SimError> {
    let k = topology.num_pairs();
    let mut rate_rng = stream_rng(seed, Stream::ArrivalRates, 0);
    let lambda_bps = draw_arrival_rates(k, cfg.mean_arrival_bps, cfg.arrival_spread, &mut rate_rng);
    let traffic = TrafficParams {
        lambda_bps: lambda_bps.clone(),
        packet_bits: cfg.packet_bits,
        slot_s: cfg.slot_s,
    };
    traffic
        .validate()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let (flows, coupling) = if policy == Policy::Proposed {
        let fps = cfg.flow_params(topology, &lambda_bps);
        let flows = fps
            .iter()
            .map(|fp| build_per_flow_with(*fp, cfg.q_max_slots * fp.lambda, cfg.table_points))
            .collect::<Result<Vec<_>, _>>()?;
        let cm = if cfg.coupling {
            CouplingModel::new(&fps, topology, cfg.q_clamp)
        } else {
            CouplingModel {
                q_clamp: cfg.q_clamp,
                ..CouplingModel::none(k)
            }
        };
        (flows, cm)
    } else {
        (Vec::new(), CouplingModel::none(k))
    };
    let bs = BaseStationLinks::new(topology, cfg.topology.path_loss)?;
    Ok(EpisodeSetup {
        lambda_bps,
        traffic,
        flows,
        coupling,
        bs,
    })
}

/// One episode of `warmup + T` slots from empty queues.
pub fn run_episode(
    cfg: &SimConfig,
    topology: &Topology,
    policy: Policy,
    seed: u64,
) -> Result<Metrics, SimError> {
    run_episode_inner(cfg, topology, policy, seed, false).map(|(m, _)| m)
}

/// [`run_episode`] that also returns the per-slot trace of the measured
/// slots.
pub fn run_episode_traced(
    cfg: &SimConfig,
    topology: &Topology,
    policy: Policy,
    seed: u64,
) -> Result<(Metrics, EpisodeTrace), SimError> {
    run_episode_inner(cfg, topology, policy, seed, true)
}

fn run_episode_inner(
    cfg: &SimConfig,
    topology: &Topology,
    policy: Policy,
    seed: u64,
    keep_trace: bool,
) -> Result<(Metrics, EpisodeTrace), SimError> {
    cfg.validate()?;
    let setup = setup_episode(cfg, topology, policy, seed)?;
    let k = topology.num_pairs();
    let ctrl = cfg.controller(policy);
    let gammas = vec![cfg.gamma; k];
    let rate_unit_bits = cfg.bits_per_rate_unit();

    let mut mac_rng = stream_rng(seed, Stream::Mac, 0);
    let mut channel_rng = stream_rng(seed, Stream::Channel, 0);
    let mut arrival_rng = stream_rng(seed, Stream::Arrivals, 0);
    let mut bs_rng = stream_rng(seed, Stream::BaseStationChannel, 0);

    let warmup = cfg.warmup_slots();
    let horizon = cfg.horizon_slots;
    let mut q = vec![0.0; k];
    let mut trace = EpisodeTrace::default();
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); k];
    let mut power_sum = vec![0.0; k];
    let mut arrived = vec![0.0; k];
    let mut served_total = vec![0.0; k];
    let mut iters_total = 0usize;
    let mut solver_calls = 0usize;
    let mut nonconverged = 0usize;
    let mut cap_hits = 0usize;

    for t in 0..warmup + horizon {
        let state = SystemState {
            sigma: sample_mac_output(topology, &mut mac_rng),
            h: sample_csi(topology, &mut channel_rng),
            q: q.clone(),
        };
        let bs_fading = crate::traffic::sample_gains(
            &[setup.bs.uplink.clone(), setup.bs.downlink.clone()],
            &mut bs_rng,
        );
        let arrivals = sample_arrivals_unchecked(&setup.traffic, &mut arrival_rng);

        let q_norm: Vec<f64> = state.q.iter().map(|b| b / rate_unit_bits).collect();
        let sigma = &state.sigma.sigma;
        let (sigma_eff, power, weight, c) = match policy {
            Policy::CellularTdma => {
                let c = cellular_round_robin(t as u64, &bs_fading.h[0], &bs_fading.h[1], &ctrl);
                let scheduled: Vec<bool> = (0..k)
                    .map(|i| i == crate::controller::round_robin_slot(t as u64, k))
                    .collect();
                let power = scheduled
                    .iter()
                    .map(|&s| if s { ctrl.p_max } else { 0.0 })
                    .collect();
                (scheduled, power, vec![0.0; k], c)
            }
            _ => {
                let (decision, weight) = if policy == Policy::Proposed {
                    let mut w = priority_gradient(&setup.flows, &setup.coupling, &q_norm);
                    // nothing to send from an empty queue
                    for (wk, &qk) in w.iter_mut().zip(&q_norm) {
                        if qk == 0.0 {
                            *wk = 0.0;
                        }
                    }
                    (
                        solve_power_proposed(&state.h.h, sigma, &w, &gammas, &ctrl),
                        w,
                    )
                } else {
                    let d = solve_power_baseline(&state.h.h, sigma, &q_norm, &gammas, &ctrl)
                        .map_err(SimError::Config)?;
                    (d, vec![0.0; k])
                };
                if sigma.iter().any(|&s| s) {
                    solver_calls += 1;
                    iters_total += decision.iters_used;
                    nonconverged += (!decision.converged) as usize;
                    cap_hits += decision.cap_hits;
                }
                let c = rates(
                    &state.h.h,
                    sigma,
                    &decision.power,
                    ctrl.noise,
                    ctrl.sinr_gap,
                );
                (sigma.clone(), decision.power, weight, c)
            }
        };

        let served = served_bits(&state.q, &sigma_eff, &c, cfg.bandwidth_hz, cfg.slot_s);
        q = queue_step(
            &state.q,
            &sigma_eff,
            &c,
            &arrivals,
            cfg.bandwidth_hz,
            cfg.slot_s,
        );
        for i in 0..k {
            arrived[i] += arrivals.bits[i];
            served_total[i] += served[i];
        }

        if t >= warmup {
            for i in 0..k {
                series[i].push(state.q[i]);
                power_sum[i] += power[i];
            }
            if keep_trace {
                trace.queue.push(state.q.clone());
                trace.power.push(power);
                trace.sigma.push(sigma_eff);
                trace.weight.push(weight);
                trace.rate.push(c);
            }
        }
    }

    let metrics = summarize(
        cfg,
        policy,
        seed,
        &setup.lambda_bps,
        &series,
        &power_sum,
        SolverCounters {
            iters_total,
            solver_calls,
            nonconverged,
            cap_hits,
        },
        arrived,
        served_total,
        q,
    );
    Ok((metrics, trace))
}

struct SolverCounters {
    iters_total: usize,
    solver_calls: usize,
    nonconverged: usize,
    cap_hits: usize,
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    cfg: &SimConfig,
    policy: Policy,
    seed: u64,
    lambda_bps: &[f64],
    series: &[Vec<f64>],
    power_sum: &[f64],
    counters: SolverCounters,
    arrived_bits: Vec<f64>,
    served_bits: Vec<f64>,
    final_queue_bits: Vec<f64>,
) -> Metrics {
    let k = series.len();
    let t = cfg.horizon_slots as f64;
    let queue_mean_bits: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / t).collect();
    let avg_delay_s: Vec<f64> = (0..k).map(|i| queue_mean_bits[i] / lambda_bps[i]).collect();
    let avg_power_w: Vec<f64> = power_sum.iter().map(|p| p / t).collect();
    let queue_p95_bits = series.iter().map(|s| percentile(s, 0.95)).collect();
    let queue_max_bits = series
        .iter()
        .map(|s| s.iter().cloned().fold(0.0, f64::max))
        .collect();
    let n = cfg.horizon_slots;
    let window_mean = |from: usize, to: usize| {
        if to <= from {
            return 0.0;
        }
        let total: f64 = (from..to)
            .map(|s| series.iter().map(|q| q[s]).sum::<f64>())
            .sum();
        total / (to - from) as f64
    };
    let sum_delay_s: f64 = avg_delay_s.iter().sum();
    let mean_power_w = avg_power_w.iter().sum::<f64>() / k as f64;
    let objective = (0..k)
        .map(|i| cfg.beta * avg_delay_s[i] / cfg.slot_s + cfg.gamma * avg_power_w[i])
        .sum();
    Metrics {
        policy,
        seed,
        slots: n,
        arrival_rates_bps: lambda_bps.to_vec(),
        mean_delay_s: sum_delay_s / k as f64,
        sum_delay_s,
        avg_delay_s,
        avg_power_w,
        mean_power_w,
        objective,
        queue_mean_bits,
        queue_p95_bits,
        queue_max_bits,
        queue_mean_second_quarter: window_mean(n / 4, n / 2),
        queue_mean_second_half: window_mean(n / 2, n),
        solver_iters_mean: if counters.solver_calls == 0 {
            0.0
        } else {
            counters.iters_total as f64 / counters.solver_calls as f64
        },
        nonconverged_slots: counters.nonconverged,
        cap_hits: counters.cap_hits,
        arrived_bits,
        served_bits,
        final_queue_bits,
    }
}

/// Nearest-rank percentile.
fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub mean_delay_s: f64,
    pub stderr_delay_s: f64,
    pub mean_power_w: f64,
    pub stderr_power_w: f64,
    pub mean_objective: f64,
    pub stderr_objective: f64,
    /// One entry per topology, in topology order.
    pub episodes: Vec<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub base_seed: u64,
    pub topology_seeds: Vec<u64>,
    pub episode_seeds: Vec<u64>,
    pub policies: Vec<PolicySummary>,
}

impl MonteCarloResult {
    pub fn summary(&self, policy: Policy) -> Option<&PolicySummary> {
        self.policies.iter().find(|s| s.policy == policy)
    }

    /// One row per topology and policy.
    pub fn episodes_csv(&self) -> String {
        let k = self
            .policies
            .first()
            .and_then(|p| p.episodes.first())
            .map_or(0, |m| m.avg_delay_s.len());
        let mut out = String::from(
            "topology,topology_seed,episode_seed,policy,mean_delay_s,sum_delay_s,mean_power_w,objective,solver_iters_mean,nonconverged_slots,cap_hits",
        );
        for i in 0..k {
            let _ = write!(out, ",delay_s_{i}");
        }
        out.push('\n');
        for s in &self.policies {
            for (i, m) in s.episodes.iter().enumerate() {
                let _ = write!(
                    out,
                    "{i},{},{},{},{},{},{},{},{},{},{}",
                    self.topology_seeds[i],
                    self.episode_seeds[i],
                    m.policy,
                    m.mean_delay_s,
                    m.sum_delay_s,
                    m.mean_power_w,
                    m.objective,
                    m.solver_iters_mean,
                    m.nonconverged_slots,
                    m.cap_hits
                );
                for d in &m.avg_delay_s {
                    let _ = write!(out, ",{d}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Topology seed for topology index `i`.
pub fn topology_seed(base_seed: u64, i: usize) -> u64 {
    derive_seed(base_seed, Stream::Topology, i as u64)
}

/// Episode seed for topology index `i`, shared by every policy.
pub fn episode_seed(base_seed: u64, i: usize) -> u64 {
    derive_seed(base_seed, Stream::Episode, i as u64)
}

/// Runs every policy on `cfg.num_topologies` random topologies with common
/// random numbers. Topologies run in parallel; results are in topology
/// order regardless of scheduling.
pub fn monte_carlo(
    cfg: &SimConfig,
    policies: &[Policy],
    base_seed: u64,
) -> Result<MonteCarloResult, SimError> {
    cfg.validate()?;
    let n = cfg.num_topologies;
    let topology_seeds: Vec<u64> = (0..n).map(|i| topology_seed(base_seed, i)).collect();
    let episode_seeds: Vec<u64> = (0..n).map(|i| episode_seed(base_seed, i)).collect();
    let per_topology: Vec<Vec<Metrics>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let topo = generate_topology(&cfg.topology, topology_seeds[i])?;
            policies
                .iter()
                .map(|&p| run_episode(cfg, &topo, p, episode_seeds[i]))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let summaries = policies
        .iter()
        .enumerate()
        .map(|(pi, &policy)| {
            let episodes: Vec<Metrics> = per_topology.iter().map(|row| row[pi].clone()).collect();
            let delays: Vec<f64> = episodes.iter().map(|m| m.mean_delay_s).collect();
            let powers: Vec<f64> = episodes.iter().map(|m| m.mean_power_w).collect();
            let objectives: Vec<f64> = episodes.iter().map(|m| m.objective).collect();
            let (mean_delay_s, stderr_delay_s) = mean_stderr(&delays);
            let (mean_power_w, stderr_power_w) = mean_stderr(&powers);
            let (mean_objective, stderr_objective) = mean_stderr(&objectives);
            PolicySummary {
                policy,
                mean_delay_s,
                stderr_delay_s,
                mean_power_w,
                stderr_power_w,
                mean_objective,
                stderr_objective,
                episodes,
            }
        })
        .collect();
    Ok(MonteCarloResult {
        base_seed,
        topology_seeds,
        episode_seeds,
        policies: summaries,
    })
}

//! Relative value iteration on a quantised one- or two-flow instance.
//!
//! Queues live on a packet grid `{0, …, Q_max}`, the fading of each direct
//! link is quantised to `M` equiprobable levels of the unit exponential,
//! and powers come from a uniform grid on `[0, p_max]`. The Bellman
//! operator works on the post-expectation value `V(Q) = E[V(σ, H, Q)]`:
//!
//! ```text
//! (T V)(Q) = Σ_σ p(σ) Σ_H p(H) min_P { c(Q, P) + Σ_Q' P[Q' | σ, H, Q, P] V(Q') }
//! ```
//!
//! with `c(Q, P) = Σ_k β_k Q_k/(λ_k τ) + γ_k P_k`, i.e. delay measured in
//! slots and power in watts. Served packets are generally fractional; the
//! post-service queue is split linearly between the two adjacent grid
//! levels (which keeps the expected queue exact), then the slot's arrivals
//! are added and anything above `Q_max` is clipped to `Q_max`.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::priority::PerFlowPriority;
use crate::specfun::exp_integral_e1;

/// Default limit on `states × σ patterns × channel states × actions`.
pub const DEFAULT_CELL_BUDGET: f64 = 5e7;

/// Arrival probabilities below this are dropped from the pmf, with their
/// mass moved onto the largest kept count.
const ARRIVAL_PMF_FLOOR: f64 = 1e-16;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP spec: {0}")]
    InvalidSpec(String),
    #[error("state space too large: {cells:e} cells exceeds the budget of {budget:e}")]
    StateSpaceTooLarge { cells: f64, budget: f64 },
    #[error("relative value iteration did not converge in {sweeps} sweeps (span {span:e})")]
    NoConvergence { sweeps: usize, span: f64 },
}

/// Problem definition. Rates are bits/s, gains linear, powers watts.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    /// `L_kk`
    pub direct_gain: Vec<f64>,
    /// `L_kj`, used only when both flows of a two-flow instance are active.
    pub cross_gain: Vec<Vec<f64>>,
    /// Two-flow instances: the pairs are in each other's sensing range and
    /// never transmit together.
    pub neighbors: bool,
    /// One-flow instances: probability of winning the channel.
    pub access_prob: f64,
    pub arrival_bps: Vec<f64>,
    pub packet_bits: f64,
    pub q_max_packets: usize,
    pub channel_levels: usize,
    pub power_levels: usize,
    pub p_max: f64,
    pub bandwidth_hz: f64,
    pub slot_s: f64,
    pub noise: f64,
    pub sinr_gap: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub cell_budget: f64,
}

impl MdpSpec {
    /// A one-flow instance with unit delay and power weights.
    pub fn single_flow(direct_gain: f64, arrival_bps: f64, packet_bits: f64) -> Self {
        Self {
            direct_gain: vec![direct_gain],
            cross_gain: vec![vec![0.0]],
            neighbors: false,
            access_prob: 1.0,
            arrival_bps: vec![arrival_bps],
            packet_bits,
            q_max_packets: 50,
            channel_levels: 8,
            power_levels: 41,
            p_max: 1.0,
            bandwidth_hz: 1e6,
            slot_s: 1e-3,
            noise: 1e-2,
            sinr_gap: 1.0,
            beta: vec![1.0],
            gamma: vec![1.0],
            cell_budget: DEFAULT_CELL_BUDGET,
        }
    }

    pub fn num_flows(&self) -> usize {
        self.direct_gain.len()
    }

    fn validate(&self) -> Result<(), MdpError> {
        let k = self.num_flows();
        let mut bad = Vec::new();
        if !(1..=2).contains(&k) {
            bad.push(format!("only one or two flows are supported, got {k}"));
        }
        let per_flow = [
            ("cross_gain", self.cross_gain.len()),
            ("arrival_bps", self.arrival_bps.len()),
            ("beta", self.beta.len()),
            ("gamma", self.gamma.len()),
        ];
        for (name, len) in per_flow {
            if len != k {
                bad.push(format!("{name} has {len} entries for {k} flows"));
            }
        }
        if self.direct_gain.iter().any(|&g| !(g > 0.0)) {
            bad.push("direct gains must be > 0".into());
        }
        if self.arrival_bps.iter().any(|&a| !(a >= 0.0)) {
            bad.push("arrival rates must be >= 0".into());
        }
        if self.beta.iter().chain(&self.gamma).any(|&w| !(w >= 0.0)) {
            bad.push("weights must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.access_prob) {
            bad.push(format!(
                "access_prob must be in [0, 1], got {}",
                self.access_prob
            ));
        }
        if self.channel_levels < 1 || self.power_levels < 1 {
            bad.push("need at least one channel level and one power level".into());
        }
        for (name, v) in [
            ("packet_bits", self.packet_bits),
            ("bandwidth_hz", self.bandwidth_hz),
            ("slot_s", self.slot_s),
            ("noise", self.noise),
        ] {
            if !(v > 0.0) {
                bad.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(self.p_max >= 0.0) {
            bad.push(format!("p_max must be >= 0, got {}", self.p_max));
        }
        if !(self.sinr_gap >= 1.0) {
            bad.push(format!("sinr_gap must be >= 1, got {}", self.sinr_gap));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(MdpError::InvalidSpec(bad.join("; ")))
        }
    }
}

/// Representative values and probabilities of `M` equiprobable bins of
/// the unit exponential. Each value is the conditional mean of its bin,
/// so the quantised mean stays exactly one.
pub fn exponential_levels(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mf = m as f64;
    let edge = |i: usize| -> f64 {
        if i == m {
            f64::INFINITY
        } else {
            -(1.0 - i as f64 / mf).ln()
        }
    };
    // ∫ x e^{-x} dx over [u, ∞) = (u + 1) e^{-u}
    let tail = |u: f64| {
        if u.is_infinite() {
            0.0
        } else {
            (u + 1.0) * (-u).exp()
        }
    };
    let values = (0..m)
        .map(|i| mf * (tail(edge(i)) - tail(edge(i + 1))))
        .collect();
    (values, vec![1.0 / mf; m])
}

/// Poisson pmf on `0..=max`, with the tail above `max` folded onto `max`.
fn arrival_pmf(mean: f64, max: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(max + 1);
    let mut p = (-mean).exp();
    let mut total = 0.0;
    for n in 0..=max {
        if n > 0 {
            p *= mean / n as f64;
            if n as f64 > mean && p < ARRIVAL_PMF_FLOOR {
                break;
            }
        }
        pmf.push(p);
        total += p;
    }
    *pmf.last_mut().unwrap() += (1.0 - total).max(0.0);
    pmf
}

/// Tabulated instance.
#[derive(Debug, Clone)]
pub struct QuantizedMdp {
    pub spec: MdpSpec,
    /// Grid points per flow, `q_max_packets + 1`.
    pub levels: usize,
    pub num_states: usize,
    /// Access patterns and their probabilities.
    pub sigma_patterns: Vec<(Vec<bool>, f64)>,
    /// Per-flow fading multipliers of the direct link and their probabilities.
    pub channel_values: Vec<f64>,
    pub channel_probs: Vec<f64>,
    /// One entry per joint channel state: level index of each flow.
    pub channel_states: Vec<Vec<usize>>,
    pub power_grid: Vec<f64>,
    /// Joint power choices, as indices into `power_grid`.
    pub actions: Vec<Vec<usize>>,
    /// Packets served, indexed `[sigma][channel][action][flow]`.
    pub service: Vec<Vec<Vec<Vec<f64>>>>,
    /// Arrival pmf per flow, in packets.
    pub arrival_pmf: Vec<Vec<f64>>,
}

/// Checks the spec, enforces the cell budget and precomputes service
/// amounts for every (σ, H, P).
pub fn build_quantized_mdp(spec: &MdpSpec) -> Result<QuantizedMdp, MdpError> {
    spec.validate()?;
    let k = spec.num_flows();
    let levels = spec.q_max_packets + 1;
    let num_states = levels.pow(k as u32);

    let sigma_patterns: Vec<(Vec<bool>, f64)> = if k == 1 {
        let nu = spec.access_prob;
        vec![(vec![true], nu), (vec![false], 1.0 - nu)]
    } else if spec.neighbors {
        vec![(vec![true, false], 0.5), (vec![false, true], 0.5)]
    } else {
        vec![(vec![true, true], 1.0)]
    }
    .into_iter()
    .filter(|(_, p)| *p > 0.0)
    .collect();

    let (channel_values, channel_probs) = exponential_levels(spec.channel_levels);
    let m = spec.channel_levels;
    let channel_states: Vec<Vec<usize>> = if k == 1 {
        (0..m).map(|i| vec![i]).collect()
    } else {
        (0..m * m).map(|i| vec![i % m, i / m]).collect()
    };
    let np = spec.power_levels;
    let power_grid: Vec<f64> = if np == 1 {
        vec![0.0]
    } else {
        (0..np)
            .map(|i| spec.p_max * i as f64 / (np - 1) as f64)
            .collect()
    };
    let actions: Vec<Vec<usize>> = if k == 1 {
        (0..np).map(|i| vec![i]).collect()
    } else {
        (0..np * np).map(|i| vec![i % np, i / np]).collect()
    };

    let cells = num_states as f64
        * sigma_patterns.len() as f64
        * channel_states.len() as f64
        * actions.len() as f64;
    if cells > spec.cell_budget {
        return Err(MdpError::StateSpaceTooLarge {
            cells,
            budget: spec.cell_budget,
        });
    }

    let packets_per_rate_unit = spec.bandwidth_hz * spec.slot_s / spec.packet_bits;
    let service = sigma_patterns
        .iter()
        .map(|(sigma, _)| {
            channel_states
                .iter()
                .map(|hs| {
                    actions
                        .iter()
                        .map(|a| {
                            (0..k)
                                .map(|f| {
                                    if !sigma[f] {
                                        return 0.0;
                                    }
                                    let p = power_grid[a[f]];
                                    let mut inter = spec.noise;
                                    for j in 0..k {
                                        if j != f && sigma[j] {
                                            inter += spec.cross_gain[f][j] * power_grid[a[j]];
                                        }
                                    }
                                    let h = spec.direct_gain[f] * channel_values[hs[f]];
                                    (1.0 + h * p / (spec.sinr_gap * inter)).log2()
                                        * packets_per_rate_unit
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let arrival_pmf = spec
        .arrival_bps
        .iter()
        .map(|&l| {
            arrival_pmf(
                l * spec.slot_s / spec.packet_bits,
                spec.q_max_packets.max(1) * 4,
            )
        })
        .collect();

    Ok(QuantizedMdp {
        spec: spec.clone(),
        levels,
        num_states,
        sigma_patterns,
        channel_values,
        channel_probs,
        channel_states,
        power_grid,
        actions,
        service,
        arrival_pmf,
    })
}

impl QuantizedMdp {
    pub fn num_flows(&self) -> usize {
        self.spec.num_flows()
    }

    /// Queue vector (packets) of a state index.
    pub fn queues(&self, s: usize) -> Vec<usize> {
        if self.num_flows() == 1 {
            vec![s]
        } else {
            vec![s % self.levels, s / self.levels]
        }
    }

    pub fn state_index(&self, q: &[usize]) -> usize {
        if q.len() == 1 {
            q[0]
        } else {
            q[0] + self.levels * q[1]
        }
    }

    fn channel_prob(&self, h: usize) -> f64 {
        self.channel_states[h]
            .iter()
            .map(|&i| self.channel_probs[i])
            .product()
    }

    /// `c(Q, P)` for state `s` and action `a`.
    pub fn stage_cost(&self, s: usize, a: usize) -> f64 {
        let q = self.queues(s);
        let sp = &self.spec;
        (0..self.num_flows())
            .map(|f| {
                let delay_slots = if sp.arrival_bps[f] > 0.0 {
                    q[f] as f64 * sp.packet_bits / (sp.arrival_bps[f] * sp.slot_s)
                } else {
                    0.0
                };
                sp.beta[f] * delay_slots + sp.gamma[f] * self.power_grid[self.actions[a][f]]
            })
            .sum()
    }

    /// Post-service grid levels and weights for one flow.
    fn post_service(&self, q: usize, served: f64) -> [(usize, f64); 2] {
        let x = (q as f64 - served).max(0.0);
        let lo = x.floor();
        let frac = x - lo;
        let lo = lo as usize;
        [(lo, 1.0 - frac), ((lo + 1).min(self.levels - 1), frac)]
    }

    /// `P[Q' | σ, H, Q, P]` as sparse `(next state, probability)` pairs,
    /// merged and sorted by state.
    pub fn transition_row(&self, s: usize, sigma: usize, h: usize, a: usize) -> Vec<(usize, f64)> {
        let q = self.queues(s);
        let k = self.num_flows();
        let per_flow: Vec<Vec<(usize, f64)>> = (0..k)
            .map(|f| {
                let mut dist = vec![0.0; self.levels];
                for (lvl, w) in self.post_service(q[f], self.service[sigma][h][a][f]) {
                    if w == 0.0 {
                        continue;
                    }
                    for (n, p) in self.arrival_pmf[f].iter().enumerate() {
                        dist[(lvl + n).min(self.levels - 1)] += w * p;
                    }
                }
                dist.into_iter()
                    .enumerate()
                    .filter(|(_, p)| *p > 0.0)
                    .collect()
            })
            .collect();
        if k == 1 {
            return per_flow[0].clone();
        }
        let mut row = Vec::new();
        for &(j, pj) in &per_flow[1] {
            for &(i, pi) in &per_flow[0] {
                row.push((i + self.levels * j, pi * pj));
            }
        }
        row
    }

    /// `E_A[V(min(post + A, Q_max))]` for every post-service state.
    fn expected_after_arrivals(&self, v: &[f64]) -> Vec<f64> {
        let l = self.levels;
        let top = l - 1;
        if self.num_flows() == 1 {
            let pmf = &self.arrival_pmf[0];
            return (0..l)
                .map(|x| {
                    pmf.iter()
                        .enumerate()
                        .map(|(n, p)| p * v[(x + n).min(top)])
                        .sum()
                })
                .collect();
        }
        // separable: convolve along flow 0, then along flow 1
        let (p0, p1) = (&self.arrival_pmf[0], &self.arrival_pmf[1]);
        let mut tmp = vec![0.0; l * l];
        for j in 0..l {
            for i in 0..l {
                tmp[i + l * j] = p0
                    .iter()
                    .enumerate()
                    .map(|(n, p)| p * v[(i + n).min(top) + l * j])
                    .sum();
            }
        }
        let mut out = vec![0.0; l * l];
        for j in 0..l {
            for i in 0..l {
                out[i + l * j] = p1
                    .iter()
                    .enumerate()
                    .map(|(n, p)| p * tmp[i + l * (j + n).min(top)])
                    .sum();
            }
        }
        out
    }

    /// Expected continuation value of action `a` given `w = E_A[V]`.
    fn continuation(&self, s: usize, sigma: usize, h: usize, a: usize, w: &[f64]) -> f64 {
        let q = self.queues(s);
        let svc = &self.service[sigma][h][a];
        if self.num_flows() == 1 {
            return self
                .post_service(q[0], svc[0])
                .iter()
                .map(|&(x, p)| p * w[x])
                .sum();
        }
        let a0 = self.post_service(q[0], svc[0]);
        let a1 = self.post_service(q[1], svc[1]);
        let mut total = 0.0;
        for &(x1, p1) in &a1 {
            for &(x0, p0) in &a0 {
                total += p0 * p1 * w[x0 + self.levels * x1];
            }
        }
        total
    }

    /// Minimising action and its value for one `(Q, σ, H)`. Ties go to the
    /// lowest action index, i.e. the least power.
    fn best_action(&self, s: usize, sigma: usize, h: usize, w: &[f64]) -> (usize, f64) {
        let pattern = &self.sigma_patterns[sigma].0;
        let mut best = (0, f64::INFINITY);
        for (ai, a) in self.actions.iter().enumerate() {
            // inactive flows do not transmit
            if a.iter().zip(pattern).any(|(&p, &on)| !on && p != 0) {
                continue;
            }
            let val = self.stage_cost(s, ai) + self.continuation(s, sigma, h, ai, w);
            if val < best.1 - 1e-15 * val.abs() {
                best = (ai, val);
            }
        }
        best
    }

    /// One application of the Bellman operator. Returns `T V` and the
    /// greedy policy indexed `[state][sigma][channel]`.
    pub fn bellman(&self, v: &[f64]) -> (Vec<f64>, Vec<Vec<Vec<usize>>>) {
        let w = self.expected_after_arrivals(v);
        let rows: Vec<(f64, Vec<Vec<usize>>)> = (0..self.num_states)
            .into_par_iter()
            .map(|s| {
                let mut total = 0.0;
                let mut pol = Vec::with_capacity(self.sigma_patterns.len());
                for (si, (_, ps)) in self.sigma_patterns.iter().enumerate() {
                    let mut row = Vec::with_capacity(self.channel_states.len());
                    for h in 0..self.channel_states.len() {
                        let (a, val) = self.best_action(s, si, h, &w);
                        total += ps * self.channel_prob(h) * val;
                        row.push(a);
                    }
                    pol.push(row);
                }
                (total, pol)
            })
            .collect();
        let (tv, policy) = rows.into_iter().unzip();
        (tv, policy)
    }

    /// Stationary distribution of the queue chain under `policy`, from
    /// an empty start.
    pub fn stationary_distribution(&self, policy: &[Vec<Vec<usize>>], sweeps: usize) -> Vec<f64> {
        let mut pi = vec![0.0; self.num_states];
        pi[0] = 1.0;
        for _ in 0..sweeps {
            let mut next = vec![0.0; self.num_states];
            for s in 0..self.num_states {
                if pi[s] == 0.0 {
                    continue;
                }
                for (si, (_, ps)) in self.sigma_patterns.iter().enumerate() {
                    for h in 0..self.channel_states.len() {
                        let w = pi[s] * ps * self.channel_prob(h);
                        for (t, p) in self.transition_row(s, si, h, policy[s][si][h]) {
                            next[t] += w * p;
                        }
                    }
                }
            }
            pi = next;
        }
        pi
    }

    /// Probability per slot that arrivals are clipped at `Q_max`, under
    /// the stationary distribution `pi` of `policy`.
    pub fn clipped_mass(&self, policy: &[Vec<Vec<usize>>], pi: &[f64]) -> f64 {
        let top = self.levels - 1;
        let mut total = 0.0;
        for s in 0..self.num_states {
            if pi[s] == 0.0 {
                continue;
            }
            let q = self.queues(s);
            for (si, (_, ps)) in self.sigma_patterns.iter().enumerate() {
                for h in 0..self.channel_states.len() {
                    let svc = &self.service[si][h][policy[s][si][h]];
                    // probability that some flow overflows
                    let mut stay = 1.0;
                    for f in 0..self.num_flows() {
                        let over: f64 = self
                            .post_service(q[f], svc[f])
                            .iter()
                            .map(|&(x, w)| {
                                w * self.arrival_pmf[f]
                                    .iter()
                                    .enumerate()
                                    .filter(|(n, _)| x + n > top)
                                    .map(|(_, p)| p)
                                    .sum::<f64>()
                            })
                            .sum();
                        stay *= 1.0 - over;
                    }
                    total += pi[s] * ps * self.channel_prob(h) * (1.0 - stay);
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RviResult {
    /// Optimal average cost per slot.
    pub theta: f64,
    /// Relative values, `V(Q_ref = 0) = 0`.
    pub v: Vec<f64>,
    /// Optimal action index, `[state][sigma][channel]`.
    pub policy: Vec<Vec<Vec<usize>>>,
    pub sweeps: usize,
    /// `span(V_{n+1} − V_n)` on the last sweep.
    pub span: f64,
}

impl RviResult {
    /// `q,V` rows plus, for one-flow results, the chosen power per
    /// channel level while active.
    pub fn to_csv(&self, mdp: &QuantizedMdp) -> String {
        let mut out = String::from("state,V");
        let one_flow = mdp.num_flows() == 1;
        if one_flow {
            for h in 0..mdp.channel_states.len() {
                let _ = write!(out, ",power_h{h}");
            }
        }
        out.push('\n');
        for (s, v) in self.v.iter().enumerate() {
            let _ = write!(out, "{s},{v}");
            if one_flow {
                for h in 0..mdp.channel_states.len() {
                    let a = self.policy[s][0][h];
                    let _ = write!(out, ",{}", mdp.power_grid[mdp.actions[a][0]]);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Iterates `V ← T V − (T V)(0)` until the span of successive differences
/// is at most `tol`.
pub fn relative_value_iteration(
    mdp: &QuantizedMdp,
    tol: f64,
    max_sweeps: usize,
) -> Result<RviResult, MdpError> {
    let mut v = vec![0.0; mdp.num_states];
    let mut span = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let (tv, policy) = mdp.bellman(&v);
        let theta = tv[0];
        let next: Vec<f64> = tv.iter().map(|x| x - theta).collect();
        let (lo, hi) = next
            .iter()
            .zip(&v)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        span = hi - lo;
        v = next;
        if span <= tol {
            return Ok(RviResult {
                theta,
                v,
                policy,
                sweeps: sweep,
                span,
            });
        }
    }
    Err(MdpError::NoConvergence {
        sweeps: max_sweeps,
        span,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return f64::NAN;
    }
    cov / (vx * vy).sqrt()
}

/// Relative value iteration against the closed-form per-flow priority.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityComparison {
    pub spearman: f64,
    pub theta: f64,
    pub c_inf: f64,
    /// `|θ − c∞| / |θ|`
    pub theta_gap: f64,
    /// Per channel level: smallest queue (packets) at which the RVI policy
    /// transmits while active, `None` if it never does.
    pub rvi_threshold: Vec<Option<usize>>,
    /// Same, for the closed-form power `(y(Q)/(γ ln2) − Γ N0/H)^+`.
    pub closed_form_threshold: Vec<Option<usize>>,
    /// Largest threshold difference over channel levels where both exist.
    pub max_threshold_gap: usize,
}

impl PriorityComparison {
    pub fn report(&self) -> String {
        let show = |t: &Option<usize>| t.map_or("-".to_string(), |q| q.to_string());
        let mut out = format!(
            "spearman(V, J) = {:.6}\ntheta = {:.6e}, c_inf = {:.6e}, relative gap = {:.4}\n",
            self.spearman, self.theta, self.c_inf, self.theta_gap
        );
        out.push_str("level  rvi_threshold  closed_form_threshold\n");
        for (i, (a, b)) in self
            .rvi_threshold
            .iter()
            .zip(&self.closed_form_threshold)
            .enumerate()
        {
            let _ = writeln!(out, "{i:>5}  {:>13}  {:>21}", show(a), show(b));
        }
        let _ = writeln!(out, "max threshold gap = {} cells", self.max_threshold_gap);
        out
    }
}

/// Compares a one-flow RVI solution with the per-flow priority built for
/// the same parameters (normalised units: queue bits/(W τ)).
pub fn compare_priority(
    mdp: &QuantizedMdp,
    rvi: &RviResult,
    pf: &PerFlowPriority,
) -> Result<PriorityComparison, MdpError> {
    if mdp.num_flows() != 1 {
        return Err(MdpError::InvalidSpec(
            "priority comparison needs a one-flow instance".into(),
        ));
    }
    let sp = &mdp.spec;
    let unit = sp.packet_bits / (sp.bandwidth_hz * sp.slot_s);
    let j: Vec<f64> = (0..mdp.levels).map(|q| pf.value(q as f64 * unit)).collect();
    let rho = spearman(&rvi.v, &j);
    let active = mdp
        .sigma_patterns
        .iter()
        .position(|(s, _)| s[0])
        .ok_or_else(|| MdpError::InvalidSpec("flow never gets the channel".into()))?;
    let m = mdp.channel_states.len();
    let rvi_threshold: Vec<Option<usize>> = (0..m)
        .map(|h| (0..mdp.levels).find(|&s| rvi.policy[s][active][h] != 0))
        .collect();
    let fp = &pf.params;
    let closed_form_threshold: Vec<Option<usize>> = (0..m)
        .map(|h| {
            let gain = sp.direct_gain[0] * mdp.channel_values[mdp.channel_states[h][0]];
            (0..mdp.levels)
                .find(|&q| fp.optimal_power(pf.derivative(q as f64 * unit), gain, true) > 0.0)
        })
        .collect();
    let max_threshold_gap = rvi_threshold
        .iter()
        .zip(&closed_form_threshold)
        .filter_map(|(a, b)| Some(a.as_ref()?.abs_diff(*b.as_ref()?)))
        .max()
        .unwrap_or(0);
    Ok(PriorityComparison {
        spearman: rho,
        theta: rvi.theta,
        c_inf: pf.c_inf,
        theta_gap: (rvi.theta - pf.c_inf).abs() / rvi.theta.abs().max(f64::MIN_POSITIVE),
        rvi_threshold,
        closed_form_threshold,
        max_threshold_gap,
    })
}

/// Mean service rate (bits/s/Hz) of a fixed power `p` over Rayleigh
/// fading with mean gain `l`: `E[log2(1 + p H/(Γ N0))] = e^{1/s} E1(1/s)/ln2`
/// with `s = p l/(Γ N0)`.
pub fn mean_rayleigh_capacity(p: f64, l: f64, noise: f64, sinr_gap: f64) -> f64 {
    let s = p * l / (sinr_gap * noise);
    if s <= 0.0 {
        return 0.0;
    }
    let z = 1.0 / s;
    let e1 = exp_integral_e1(z).unwrap_or(0.0);
    (z.exp() * e1) / std::f64::consts::LN_2
}

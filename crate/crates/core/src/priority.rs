//! Closed-form approximate priority function.
//!
//! For each flow the decoupled (no cross interference) optimality equation
//! has a solution given parametrically in `y = J_k'(Q_k)`:
//!
//! ```text
//! Q_k(y) = (λ/β) [ a E1(a/y)/(n ln2) − λ y − y (e^{−a/y} − E1(a/y))/(n ln2) + c∞ ]
//! J_k(y) = (λ/β) [ E1(a/y)(2y² − a²)/(4 n ln2) − y(y − a) e^{−a/y}/(4 n ln2) − λ y²/2 ] + b
//! ```
//!
//! with `a = N0 Γ γ ln2 / L_kk`, `n = |N_k(δ)| + 1`, `E1(a/d) = n λ ln2` and
//! `c∞ = (d e^{−a/d} − a E1(a/d))/(n ln2)`. `dQ/dy = (λ/β)(E1(a/y)/(n ln2) − λ)`
//! vanishes at `y = d`, which is where `Q` reaches its minimum of zero, so the
//! valid branch is `y ≥ y0 = d`. Along it `dJ/dy = y dQ/dy`.
//!
//! The full approximation adds first-order coupling between flows that are
//! outside each other's sensing range:
//!
//! ```text
//! Ṽ(Q) = Σ_k J_k(Q_k) + Σ_k Σ_{j∉N_k, j≠k} D_kj L_kj Q_k² Q_j / ((log2 Q_k)² log2 Q_j)
//! ```
//!
//! Units: queues are normalised to `bits / (W τ)` and rates to
//! `bits / (W τ)` per slot (i.e. bits/s/Hz), so the time unit is one slot and
//! the delay weight `β` multiplies delay measured in slots.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::specfun::{exp_integral_e1, find_root, RootBracket, SpecfunError};
use crate::topology::Topology;

const LN2: f64 = std::f64::consts::LN_2;

/// Number of `y` samples in a priority table.
pub const DEFAULT_TABLE_POINTS: usize = 4096;
/// Table extent in units of mean per-slot arrivals.
pub const DEFAULT_Q_MAX_SLOTS: f64 = 1e4;
/// Coupling terms are dropped when either participating queue is at or
/// below this level (normalised units).
pub const DEFAULT_Q_CLAMP: f64 = 2.0;

#[derive(Debug, Error)]
pub enum PriorityError {
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible load: {0}")]
    InfeasibleLoad(String),
    #[error("priority table is not strictly increasing in Q at y = {y:e}")]
    NonMonotoneTable { y: f64 },
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-flow inputs, in normalised units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Delay weight (per slot of delay).
    pub beta: f64,
    /// Power weight (per watt).
    pub gamma: f64,
    /// Mean arrival rate, bits/s/Hz.
    pub lambda: f64,
    /// Long-term direct gain `L_kk`.
    pub direct_gain: f64,
    /// Noise power, watts.
    pub noise: f64,
    pub sinr_gap: f64,
    /// `|N_k(δ)| + 1`
    pub reuse_count: usize,
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), PriorityError> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("direct_gain", self.direct_gain),
            ("noise", self.noise),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                bad.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.sinr_gap >= 1.0) {
            bad.push(format!("sinr_gap must be >= 1, got {}", self.sinr_gap));
        }
        if self.reuse_count < 1 {
            bad.push("reuse_count must be >= 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(PriorityError::InvalidParams(bad.join("; ")))
        }
    }

    fn n(&self) -> f64 {
        self.reuse_count as f64
    }

    /// `a = N0 Γ γ ln2 / L_kk`
    pub fn a(&self) -> f64 {
        self.noise * self.sinr_gap * self.gamma * LN2 / self.direct_gain
    }

    /// Power that minimises the per-flow optimality equation at marginal
    /// value `y`: `(y σ/(γ ln2) − Γ N0 / H_kk)^+`.
    pub fn optimal_power(&self, y: f64, h_kk: f64, active: bool) -> f64 {
        if !active || h_kk <= 0.0 {
            return 0.0;
        }
        (y / (self.gamma * LN2) - self.sinr_gap * self.noise / h_kk).max(0.0)
    }

    /// `E[γ P*]` over Rayleigh `H_kk` and Bernoulli(1/n) access.
    pub fn expected_power_cost(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let z = self.a() / y;
        let e1 = exp_integral_e1(z).unwrap_or(0.0);
        (y / LN2 * (-z).exp() - self.gamma * self.noise * self.sinr_gap / self.direct_gain * e1)
            / self.n()
    }

    /// `E[σ log2(1 + P* H_kk/(Γ N0))]`
    pub fn expected_rate(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        exp_integral_e1(self.a() / y).unwrap_or(0.0) / (self.n() * LN2)
    }
}

/// One sample of the parametric solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TablePoint {
    pub y: f64,
    pub q: f64,
    pub j: f64,
    /// `dQ/dy` at this point.
    pub dq_dy: f64,
}

/// Per-flow priority function `J_k` with an invertible lookup table.
#[derive(Debug, Clone)]
pub struct PerFlowPriority {
    pub params: FlowParams,
    pub a: f64,
    pub d: f64,
    pub c_inf: f64,
    pub y0: f64,
    pub b: f64,
    /// `β n / (2 λ)`, the leading coefficient of `Q²/log2 Q`.
    pub asymptotic_coeff: f64,
    pub q_max_table: f64,
    pub table: Vec<TablePoint>,
}

/// Builds the per-flow priority function with the default table size.
pub fn build_per_flow(fp: FlowParams, q_max_table: f64) -> Result<PerFlowPriority, PriorityError> {
    build_per_flow_with(fp, q_max_table, DEFAULT_TABLE_POINTS)
}

pub fn build_per_flow_with(
    fp: FlowParams,
    q_max_table: f64,
    table_points: usize,
) -> Result<PerFlowPriority, PriorityError> {
    fp.validate()?;
    if !(q_max_table > 0.0) || table_points < 2 {
        return Err(PriorityError::InvalidParams(format!(
            "need q_max_table > 0 and at least two table points (got {q_max_table}, {table_points})"
        )));
    }
    let a = fp.a();
    let n = fp.n();
    let target = n * fp.lambda * LN2;

    // d from E1(a/d) = n λ ln2, searched over ln(a/d)
    let z_lo = 1e-300f64;
    let z_hi = 745.0f64;
    let e1_max = exp_integral_e1(z_lo)?;
    if target >= e1_max {
        return Err(PriorityError::InfeasibleLoad(format!(
            "n λ ln2 = {target:e} exceeds the largest attainable E1 value {e1_max:e}"
        )));
    }
    let g = |u: f64| exp_integral_e1(u.exp()).unwrap_or(0.0) - target;
    let u = find_root(
        g,
        RootBracket::with_tolerances(z_lo.ln(), z_hi.ln(), 1e-15 * target.max(1e-300), 1e-15, 400)?,
    )
    .map_err(|e| PriorityError::InfeasibleLoad(format!("solving for d: {e}")))?;
    let z0 = u.exp();
    let d = a / z0;
    let c_inf = (d * (-z0).exp() - a * exp_integral_e1(z0)?) / (n * LN2);

    let mut pf = PerFlowPriority {
        params: fp,
        a,
        d,
        c_inf,
        y0: d,
        b: 0.0,
        asymptotic_coeff: fp.beta * n / (2.0 * fp.lambda),
        q_max_table,
        table: Vec::new(),
    };

    // y0: stationary point of Q(y), bracketed by geometric expansion
    let slope = |y: f64| pf.dq_dy(y);
    let lo = a * 1e-3;
    let mut hi = a;
    let mut expansions = 0;
    while slope(hi) <= 0.0 {
        hi *= 4.0;
        expansions += 1;
        if expansions > 600 || !hi.is_finite() {
            return Err(PriorityError::InfeasibleLoad(
                "could not bracket the zero-queue point y0".into(),
            ));
        }
    }
    let y0 = find_root(
        slope,
        RootBracket::with_tolerances(lo, hi, 1e-300, 1e-15, 400)?,
    )
    .map_err(|e| PriorityError::InfeasibleLoad(format!("solving for y0: {e}")))?;
    pf.y0 = y0;
    pf.b = -pf.raw_value_at(y0);

    // upper end of the table
    let mut y_hi = y0 * 2.0;
    let mut guard = 0;
    while pf.queue_at(y_hi) < q_max_table {
        y_hi *= 2.0;
        guard += 1;
        if guard > 2000 || !y_hi.is_finite() {
            return Err(PriorityError::InfeasibleLoad(
                "queue never reaches the table limit".into(),
            ));
        }
    }
    let y_max = find_root(
        |y| pf.queue_at(y) - q_max_table,
        RootBracket::with_tolerances(y0, y_hi, 1e-12 * q_max_table, 1e-15, 400)?,
    )?;

    let ratio = (y_max / y0).ln() / (table_points - 1) as f64;
    let mut table = Vec::with_capacity(table_points);
    for i in 0..table_points {
        let y = if i == 0 {
            y0
        } else if i == table_points - 1 {
            y_max
        } else {
            y0 * (ratio * i as f64).exp()
        };
        let (q, j) = if i == 0 {
            (0.0, 0.0)
        } else {
            (pf.queue_at(y), pf.value_at(y))
        };
        table.push(TablePoint {
            y,
            q,
            j,
            dq_dy: pf.dq_dy(y),
        });
    }
    for w in table.windows(2) {
        if !(w[1].q > w[0].q) || !(w[1].j > w[0].j) {
            return Err(PriorityError::NonMonotoneTable { y: w[1].y });
        }
    }
    pf.table = table;
    Ok(pf)
}

impl PerFlowPriority {
    fn n(&self) -> f64 {
        self.params.n()
    }

    fn scale(&self) -> f64 {
        self.params.lambda / self.params.beta
    }

    /// Parametric `Q_k(y)`, clamped at zero.
    pub fn queue_at(&self, y: f64) -> f64 {
        let a = self.a;
        let nl = self.n() * LN2;
        let z = a / y;
        let e1 = exp_integral_e1(z).unwrap_or(0.0);
        let ez = (-z).exp();
        let lam = self.params.lambda;
        let q = self.scale() * (a * e1 / nl - lam * y - y * (ez - e1) / nl + self.c_inf);
        q.max(0.0)
    }

    /// `dQ/dy = (λ/β)(E1(a/y)/(n ln2) − λ)`
    pub fn dq_dy(&self, y: f64) -> f64 {
        let e1 = exp_integral_e1(self.a / y).unwrap_or(0.0);
        self.scale() * (e1 / (self.n() * LN2) - self.params.lambda)
    }

    fn raw_value_at(&self, y: f64) -> f64 {
        let a = self.a;
        let nl4 = 4.0 * self.n() * LN2;
        let z = a / y;
        let e1 = exp_integral_e1(z).unwrap_or(0.0);
        let ez = (-z).exp();
        self.scale()
            * (e1 * (2.0 * y * y - a * a) / nl4
                - y * (y - a) * ez / nl4
                - self.params.lambda * y * y / 2.0)
    }

    /// Parametric `J_k(y)` including the offset `b`.
    pub fn value_at(&self, y: f64) -> f64 {
        self.raw_value_at(y) + self.b
    }

    /// `y` with `Q_k(y) = q` on the tabulated range.
    fn invert(&self, q: f64) -> f64 {
        let t = &self.table;
        if q <= 0.0 {
            return self.y0;
        }
        let i = match t.binary_search_by(|p| p.q.partial_cmp(&q).unwrap()) {
            Ok(i) => return t[i].y,
            Err(i) if i < t.len() => i - 1,
            // at most a rounding error past the last point
            Err(_) => {
                return self.polish(
                    q,
                    t[t.len() - 1].y,
                    t[t.len() - 1].y,
                    2.0 * t[t.len() - 1].y,
                )
            }
        };
        let (p0, p1) = (t[i], t[i + 1]);
        let h = p1.q - p0.q;
        let s = (q - p0.q) / h;
        let y = if i == 0 {
            // Q grows quadratically away from y0
            p0.y + (p1.y - p0.y) * s.sqrt()
        } else {
            // cubic Hermite in q with exact slopes dy/dq
            let m0 = h / p0.dq_dy;
            let m1 = h / p1.dq_dy;
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * p0.y
                + (s3 - 2.0 * s2 + s) * m0
                + (-2.0 * s3 + 3.0 * s2) * p1.y
                + (s3 - s2) * m1
        };
        self.polish(q, y, p0.y, p1.y)
    }

    /// Safeguarded Newton on `Q(y) = q` inside `[lo, hi]`, from `y`.
    fn polish(&self, q: f64, mut y: f64, mut lo: f64, mut hi: f64) -> f64 {
        if !(y > lo && y < hi) {
            y = 0.5 * (lo + hi);
        }
        for _ in 0..50 {
            let f = self.queue_at(y) - q;
            if f > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let slope = self.dq_dy(y);
            let mut next = if slope > 0.0 { y - f / slope } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 2.0 * f64::EPSILON * y {
                return next;
            }
            y = next;
        }
        y
    }

    /// `J_k(Q)`, using the asymptotic tail past the table.
    pub fn value(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if q > self.q_max_table {
            return self.asymptotic_coeff * q * q / q.log2();
        }
        self.value_at(self.invert(q)).max(0.0)
    }

    /// `J_k'(Q) = y(Q)`, using the asymptotic tail past the table.
    pub fn derivative(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return self.y0;
        }
        if q > self.q_max_table {
            return 2.0 * self.asymptotic_coeff * q / q.log2();
        }
        self.invert(q)
    }

    /// Residual of the per-flow optimality equation at table point `y`,
    /// relative to the largest of its terms.
    pub fn ode_residual(&self, y: f64) -> f64 {
        let fp = &self.params;
        let q = self.queue_at(y);
        let terms = [
            fp.beta * q / fp.lambda,
            fp.expected_power_cost(y),
            -self.c_inf,
            y * fp.lambda,
            -y * fp.expected_rate(y),
        ];
        let sum: f64 = terms.iter().sum();
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        if scale == 0.0 {
            0.0
        } else {
            sum.abs() / scale
        }
    }

    /// Table as CSV with columns `y,Q,J,Jprime`.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("y,Q,J,Jprime\n");
        for p in &self.table {
            let _ = writeln!(out, "{},{},{},{}", p.y, p.q, p.j, p.y);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PriorityError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.table_csv().as_bytes())?;
        Ok(())
    }
}

/// First-order coupling coefficients between flows outside each other's
/// sensing range.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingModel {
    /// `D_kj`, zero on the diagonal and for sensing neighbours.
    pub d: Vec<Vec<f64>>,
    /// `L_kj` for the included pairs, zero elsewhere.
    pub l_cross: Vec<Vec<f64>>,
    pub q_clamp: f64,
}

impl CouplingModel {
    /// `D_kj = β_k β_j n_k / (2 ln2 λ_k λ_j γ_j N0)` for `j ≠ k`, `j ∉ N_k`.
    pub fn new(flows: &[FlowParams], topology: &Topology, q_clamp: f64) -> Self {
        let k = flows.len();
        let mut d = vec![vec![0.0; k]; k];
        let mut l_cross = vec![vec![0.0; k]; k];
        for a in 0..k {
            for j in 0..k {
                if a == j || topology.are_neighbors(a, j) {
                    continue;
                }
                let (fk, fj) = (&flows[a], &flows[j]);
                d[a][j] = fk.beta * fj.beta * fk.n()
                    / (2.0 * LN2 * fk.lambda * fj.lambda * fj.gamma * fj.noise);
                l_cross[a][j] = topology.gain[a][j];
            }
        }
        Self {
            d,
            l_cross,
            q_clamp,
        }
    }

    /// No coupling at all.
    pub fn none(k: usize) -> Self {
        Self {
            d: vec![vec![0.0; k]; k],
            l_cross: vec![vec![0.0; k]; k],
            q_clamp: DEFAULT_Q_CLAMP,
        }
    }

    fn active(&self, q: &[f64], k: usize, j: usize) -> bool {
        k != j && self.d[k][j] > 0.0 && q[k] > self.q_clamp && q[j] > self.q_clamp
    }
}

/// `Ṽ(Q)`
pub fn approx_value(flows: &[PerFlowPriority], cm: &CouplingModel, q: &[f64]) -> f64 {
    let mut v: f64 = flows.iter().zip(q).map(|(f, &qk)| f.value(qk)).sum();
    let k = flows.len();
    for a in 0..k {
        for j in 0..k {
            if !cm.active(q, a, j) {
                continue;
            }
            let la = q[a].log2();
            let lj = q[j].log2();
            v += cm.d[a][j] * cm.l_cross[a][j] * q[a] * q[a] * q[j] / (la * la * lj);
        }
    }
    v
}

/// `∂Ṽ/∂Q_k` without the floor at zero.
pub fn priority_gradient_raw(flows: &[PerFlowPriority], cm: &CouplingModel, q: &[f64]) -> Vec<f64> {
    let k = flows.len();
    (0..k)
        .map(|a| {
            let mut g = flows[a].derivative(q[a]);
            for j in 0..k {
                if !cm.active(q, a, j) {
                    continue;
                }
                let la = q[a].log2();
                let lj = q[j].log2();
                let common = q[j] * (q[a].ln() - 1.0) / (LN2 * la * la * lj);
                let own = 2.0 * cm.d[a][j] * cm.l_cross[a][j] * q[a] / la;
                let theirs = cm.d[j][a] * cm.l_cross[j][a] * q[j] / lj;
                g += common * (own + theirs);
            }
            g
        })
        .collect()
}

/// `∂Ṽ/∂Q_k` floored at zero, as used for per-slot flow weights.
pub fn priority_gradient(flows: &[PerFlowPriority], cm: &CouplingModel, q: &[f64]) -> Vec<f64> {
    priority_gradient_raw(flows, cm, q)
        .into_iter()
        .map(|g| g.max(0.0))
        .collect()
}

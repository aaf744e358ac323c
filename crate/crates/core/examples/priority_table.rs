//! Builds the per-flow priority function of one D2D link and prints a few
//! points of `J(Q)` and `J'(Q)`.
//!
//! `cargo run --release --example priority_table -- [out.csv]`

use d2d_power::priority::{build_per_flow, FlowParams};
use d2d_power::sim::SimConfig;
use d2d_power::topology::path_gain;

fn main() {
    let cfg = SimConfig::default();
    let fp = FlowParams {
        beta: cfg.beta,
        gamma: cfg.gamma,
        // queue and rate units are bits/(W τ) and bits/s/Hz
        lambda: cfg.mean_arrival_bps / cfg.bandwidth_hz,
        direct_gain: path_gain(cfg.topology.d2d_range_m, cfg.topology.path_loss).unwrap(),
        noise: cfg.noise_w(),
        sinr_gap: cfg.sinr_gap,
        reuse_count: 2,
    };
    let pf = build_per_flow(fp, cfg.q_max_slots * fp.lambda).expect("feasible load");
    println!(
        "a = {:.4e}, d = y0 = {:.4e}, c_inf = {:.4e}",
        pf.a, pf.y0, pf.c_inf
    );

    println!(
        "\n{:>10}  {:>14}  {:>12}  {:>10}",
        "Q", "J(Q)", "J'(Q)", "P* (W)"
    );
    for q in [0.0, 0.1, 1.0, 10.0, 100.0, 1000.0, 5000.0] {
        let y = pf.derivative(q);
        // transmit power under the mean channel gain
        let p = fp.optimal_power(y, fp.direct_gain, true);
        println!("{q:>10}  {:>14.6e}  {y:>12.6e}  {p:>10.4e}", pf.value(q));
    }

    let worst = pf
        .table
        .iter()
        .map(|p| pf.ode_residual(p.y))
        .fold(0.0, f64::max);
    println!(
        "\nlargest optimality-equation residual over {} points: {worst:.1e}",
        pf.table.len()
    );

    if let Some(path) = std::env::args().nth(1) {
        pf.write_csv(path.as_ref()).expect("writable path");
        println!("table written to {path}");
    }
}

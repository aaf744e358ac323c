//! Simulates one episode under one policy and reports per-flow metrics.
//!
//! `cargo run --release --example single_episode -- [policy] [slots] [trace.csv]`

use d2d_power::controller::Policy;
use d2d_power::sim::{run_episode_traced, SimConfig};
use d2d_power::topology::generate_topology;

fn main() {
    let mut args = std::env::args().skip(1);
    let policy: Policy = args
        .next()
        .map(|s| s.parse().expect("unknown policy"))
        .unwrap_or(Policy::Proposed);
    let cfg = SimConfig {
        horizon_slots: args.next().and_then(|s| s.parse().ok()).unwrap_or(2000),
        ..SimConfig::default()
    };
    let topo = generate_topology(&cfg.topology, 11).unwrap();
    let (m, trace) = run_episode_traced(&cfg, &topo, policy, 11).expect("valid config");

    println!("{policy} over {} slots", m.slots);
    println!("\npair  rate (Mbps)  delay (ms)  p95 queue (kb)  power (mW)");
    for k in 0..topo.num_pairs() {
        println!(
            "{k:>4}  {:>11.2}  {:>10.3}  {:>14.1}  {:>10.2}",
            m.arrival_rates_bps[k] / 1e6,
            m.avg_delay_s[k] * 1e3,
            m.queue_p95_bits[k] / 1e3,
            m.avg_power_w[k] * 1e3
        );
    }
    println!(
        "\nmean delay {:.3} ms, mean power {:.2} mW, objective {:.3}",
        m.mean_delay_s * 1e3,
        m.mean_power_w * 1e3,
        m.objective
    );
    println!(
        "solver: {:.1} iterations per slot, {} slots unconverged",
        m.solver_iters_mean, m.nonconverged_slots
    );
    if let Some(path) = args.next() {
        std::fs::write(&path, trace.to_csv()).expect("writable path");
        println!("trace written to {path}");
    }
}

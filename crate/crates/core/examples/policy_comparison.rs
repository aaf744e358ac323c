//! Runs all five policies on random topologies and prints delay and power.
//!
//! `cargo run --release --example policy_comparison -- [topologies] [slots] [gamma] [coupling 0|1]`

use d2d_power::controller::Policy;
use d2d_power::sim::{monte_carlo, SimConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let cfg = SimConfig {
        num_topologies: arg(0, 20.0) as usize,
        horizon_slots: arg(1, 1000.0) as usize,
        gamma: arg(2, 1.0),
        coupling: arg(3, 1.0) != 0.0,
        ..SimConfig::default()
    };
    let result = monte_carlo(&cfg, &Policy::ALL, cfg.seed).expect("simulation failed");
    println!(
        "{:<16} {:>12} {:>10} {:>11} {:>10} {:>8} {:>10}",
        "policy", "delay (ms)", "stderr", "power (W)", "stderr", "iters", "unconverged"
    );
    for s in &result.policies {
        let n = s.episodes.len() as f64;
        let iters = s.episodes.iter().map(|m| m.solver_iters_mean).sum::<f64>() / n;
        let unconverged: usize = s.episodes.iter().map(|m| m.nonconverged_slots).sum();
        println!(
            "{:<16} {:>12.4} {:>10.4} {:>11.5} {:>10.5} {:>8.2} {:>10}",
            s.policy.name(),
            s.mean_delay_s * 1e3,
            s.stderr_delay_s * 1e3,
            s.mean_power_w,
            s.stderr_power_w,
            iters,
            unconverged
        );
    }
}

//! One slot of power control: draws a topology, an access pattern, fading
//! and queues, then compares the proposed allocation with the baselines.

use d2d_power::controller::{
    per_stage_objective, solve_power_baseline, solve_power_proposed, Policy,
};
use d2d_power::mac::sample_mac_output;
use d2d_power::priority::{build_per_flow, priority_gradient, CouplingModel};
use d2d_power::rng::{stream_rng, Stream};
use d2d_power::sim::SimConfig;
use d2d_power::topology::generate_topology;
use d2d_power::traffic::sample_csi;
use rand::Rng;

fn main() {
    let cfg = SimConfig::default();
    let topo = generate_topology(&cfg.topology, 3).unwrap();
    let k = topo.num_pairs();
    let mut rng = stream_rng(3, Stream::Channel, 0);

    let sigma = sample_mac_output(&topo, &mut rng).sigma;
    let h = sample_csi(&topo, &mut rng).h;
    let q: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..50.0)).collect();

    let lambda = vec![cfg.mean_arrival_bps; k];
    let fps = cfg.flow_params(&topo, &lambda);
    let flows: Vec<_> = fps
        .iter()
        .map(|&fp| build_per_flow(fp, cfg.q_max_slots * fp.lambda).unwrap())
        .collect();
    let cm = CouplingModel::new(&fps, &topo, cfg.q_clamp);
    let w = priority_gradient(&flows, &cm, &q);
    let gammas = vec![cfg.gamma; k];

    let ctrl = cfg.controller(Policy::Proposed);
    let proposed = solve_power_proposed(&h, &sigma, &w, &gammas, &ctrl);
    println!(
        "proposed: {} iterations, converged = {}, residual {:.1e}",
        proposed.iters_used, proposed.converged, proposed.final_residual
    );

    println!("\npair  active  queue   weight      power (W)");
    for i in 0..k {
        println!(
            "{i:>4}  {:>6}  {:>5.1}  {:>9.3e}  {:>9.4}",
            sigma[i], q[i], w[i], proposed.power[i]
        );
    }

    // every allocation scored with the same priority weights
    let score =
        |p: &[f64]| per_stage_objective(&h, &sigma, p, &w, &gammas, ctrl.noise, ctrl.sinr_gap);
    println!("\n{:<16} {:>12} {:>12}", "policy", "objective", "total W");
    println!(
        "{:<16} {:>12.4} {:>12.4}",
        "proposed",
        score(&proposed.power),
        proposed.power.iter().sum::<f64>()
    );
    for policy in [
        Policy::FixedMaxPower,
        Policy::CsiOnly,
        Policy::QueueWeighted,
    ] {
        let d = solve_power_baseline(&h, &sigma, &q, &gammas, &cfg.controller(policy)).unwrap();
        println!(
            "{:<16} {:>12.4} {:>12.4}",
            policy.name(),
            score(&d.power),
            d.power.iter().sum::<f64>()
        );
    }
}

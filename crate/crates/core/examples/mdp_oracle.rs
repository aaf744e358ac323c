//! Solves a small one-flow instance by relative value iteration and
//! compares the result with the closed-form per-flow priority function.

use d2d_power::mdp::{build_quantized_mdp, compare_priority, relative_value_iteration, MdpSpec};
use d2d_power::priority::{build_per_flow, FlowParams};

fn main() {
    // 1 packet per slot on average, SNR 100 at full power and mean fading
    let spec = MdpSpec::single_flow(1.0, 1e6, 1000.0);
    let mdp = build_quantized_mdp(&spec).expect("valid instance");
    let start = std::time::Instant::now();
    let rvi = relative_value_iteration(&mdp, 1e-9, 100_000).expect("RVI converges");
    println!(
        "RVI: theta = {:.6}, {} sweeps, span {:.2e}, {:.2?}",
        rvi.theta,
        rvi.sweeps,
        rvi.span,
        start.elapsed()
    );

    let pi = mdp.stationary_distribution(&rvi.policy, 2000);
    println!(
        "clipped arrival mass per slot: {:.3e}",
        mdp.clipped_mass(&rvi.policy, &pi)
    );

    let fp = FlowParams {
        beta: spec.beta[0],
        gamma: spec.gamma[0],
        lambda: spec.arrival_bps[0] / spec.bandwidth_hz,
        direct_gain: spec.direct_gain[0],
        noise: spec.noise,
        sinr_gap: spec.sinr_gap,
        reuse_count: 1,
    };
    let pf = build_per_flow(fp, 1e4 * fp.lambda).expect("feasible load");
    let cmp = compare_priority(&mdp, &rvi, &pf).expect("one-flow instance");
    print!("{}", cmp.report());
}

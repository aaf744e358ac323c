use d2d_power::controller::Policy;
use d2d_power::mdp::mean_rayleigh_capacity;
use d2d_power::sim::{
    episode_seed, monte_carlo, run_episode, run_episode_traced, topology_seed, SimConfig,
};
use d2d_power::topology::{generate_topology, Topology};

fn small_cfg() -> SimConfig {
    SimConfig {
        horizon_slots: 400,
        num_topologies: 3,
        seed: 42,
        ..SimConfig::default()
    }
}

fn topo(cfg: &SimConfig, seed: u64) -> Topology {
    generate_topology(&cfg.topology, seed).unwrap()
}

#[test]
fn bits_are_conserved() {
    let cfg = small_cfg();
    let t = topo(&cfg, 3);
    for policy in Policy::ALL {
        let m = run_episode(&cfg, &t, policy, 9).unwrap();
        for k in 0..t.num_pairs() {
            let residual = m.arrived_bits[k] - m.served_bits[k] - m.final_queue_bits[k];
            assert!(
                residual.abs() <= 1e-9 * m.arrived_bits[k].max(1.0),
                "{policy} flow {k}: {residual}"
            );
            assert!(m.served_bits[k] >= 0.0 && m.final_queue_bits[k] >= 0.0);
        }
    }
}

#[test]
fn metrics_agree_with_trace() {
    let cfg = small_cfg();
    let t = topo(&cfg, 4);
    for policy in [
        Policy::Proposed,
        Policy::QueueWeighted,
        Policy::CellularTdma,
    ] {
        let (m, trace) = run_episode_traced(&cfg, &t, policy, 5).unwrap();
        assert_eq!(trace.queue.len(), cfg.horizon_slots);
        assert_eq!(m, run_episode(&cfg, &t, policy, 5).unwrap());
        let n = trace.queue.len() as f64;
        for k in 0..t.num_pairs() {
            let q: f64 = trace.queue.iter().map(|row| row[k]).sum::<f64>() / n;
            let p: f64 = trace.power.iter().map(|row| row[k]).sum::<f64>() / n;
            assert!((q - m.queue_mean_bits[k]).abs() <= 1e-9 * q.max(1.0));
            assert!((p - m.avg_power_w[k]).abs() <= 1e-12);
            let d = q / m.arrival_rates_bps[k];
            assert!((d - m.avg_delay_s[k]).abs() <= 1e-12 * d.max(1e-9));
            // power only on active links
            for (row, s) in trace.power.iter().zip(&trace.sigma) {
                assert!(s[k] || row[k] == 0.0);
            }
        }
        let objective: f64 = (0..t.num_pairs())
            .map(|k| cfg.beta * m.avg_delay_s[k] / cfg.slot_s + cfg.gamma * m.avg_power_w[k])
            .sum();
        assert!((objective - m.objective).abs() <= 1e-9 * objective);
    }
}

#[test]
fn queue_recursion_holds_slot_by_slot() {
    let cfg = small_cfg();
    let t = topo(&cfg, 6);
    let (_, trace) = run_episode_traced(&cfg, &t, Policy::Proposed, 6).unwrap();
    let wt = cfg.bandwidth_hz * cfg.slot_s;
    for s in 0..trace.queue.len() - 1 {
        for k in 0..t.num_pairs() {
            let served = if trace.sigma[s][k] {
                (trace.rate[s][k] * wt).min(trace.queue[s][k])
            } else {
                0.0
            };
            let arrivals = trace.queue[s + 1][k] - (trace.queue[s][k] - served);
            // arrivals are whole packets
            let packets = arrivals / cfg.packet_bits as f64;
            assert!(packets >= -1e-9, "slot {s}: {packets}");
            assert!(
                (packets - packets.round()).abs() < 1e-6,
                "slot {s}: {packets}"
            );
        }
    }
}

#[test]
fn episodes_are_deterministic_and_share_random_numbers() {
    let cfg = small_cfg();
    let t = topo(&cfg, 7);
    let runs: Vec<_> = Policy::ALL
        .iter()
        .map(|&p| run_episode(&cfg, &t, p, 77).unwrap())
        .collect();
    for (p, m) in Policy::ALL.iter().zip(&runs) {
        assert_eq!(m, &run_episode(&cfg, &t, *p, 77).unwrap());
        // common random numbers: identical arrivals whatever the policy
        assert_eq!(m.arrived_bits, runs[0].arrived_bits);
        assert_eq!(m.arrival_rates_bps, runs[0].arrival_rates_bps);
    }
    assert_ne!(runs[0], run_episode(&cfg, &t, Policy::ALL[0], 78).unwrap());
}

#[test]
fn monte_carlo_is_reproducible_and_order_free() {
    let cfg = small_cfg();
    let a = monte_carlo(&cfg, &[Policy::Proposed, Policy::CsiOnly], 5).unwrap();
    let b = monte_carlo(&cfg, &[Policy::CsiOnly, Policy::Proposed], 5).unwrap();
    assert_eq!(
        a,
        monte_carlo(&cfg, &[Policy::Proposed, Policy::CsiOnly], 5).unwrap()
    );
    for p in [Policy::Proposed, Policy::CsiOnly] {
        assert_eq!(a.summary(p), b.summary(p));
    }
    assert_eq!(
        a.topology_seeds,
        (0..3).map(|i| topology_seed(5, i)).collect::<Vec<_>>()
    );
    // each topology result equals a standalone episode
    for i in 0..cfg.num_topologies {
        let t = topo(&cfg, topology_seed(5, i));
        let m = run_episode(&cfg, &t, Policy::CsiOnly, episode_seed(5, i)).unwrap();
        assert_eq!(a.summary(Policy::CsiOnly).unwrap().episodes[i], m);
    }
}

#[test]
fn single_topology_summary_is_the_episode() {
    let cfg = SimConfig {
        num_topologies: 1,
        ..small_cfg()
    };
    let mc = monte_carlo(&cfg, &[Policy::FixedMaxPower], 3).unwrap();
    let s = mc.summary(Policy::FixedMaxPower).unwrap();
    let t = topo(&cfg, topology_seed(3, 0));
    let m = run_episode(&cfg, &t, Policy::FixedMaxPower, episode_seed(3, 0)).unwrap();
    assert_eq!(s.mean_delay_s, m.mean_delay_s);
    assert_eq!(s.stderr_delay_s, 0.0);
}

#[test]
fn negligible_traffic_costs_nothing() {
    let cfg = SimConfig {
        mean_arrival_bps: 1e-9,
        ..small_cfg()
    };
    let t = topo(&cfg, 8);
    for policy in [Policy::Proposed, Policy::QueueWeighted] {
        let m = run_episode(&cfg, &t, policy, 1).unwrap();
        assert!(m.arrived_bits.iter().all(|&b| b == 0.0));
        assert_eq!(m.mean_delay_s, 0.0);
        assert_eq!(m.mean_power_w, 0.0);
    }
}

#[test]
fn fixed_power_rate_matches_rayleigh_capacity() {
    let cfg = SimConfig {
        horizon_slots: 100_000,
        warmup_fraction: 0.0,
        ..SimConfig::default()
    };
    let t = Topology::from_positions(
        vec![[100.0, 0.0]],
        vec![[140.0, 0.0]],
        cfg.topology.sensing_distance_m,
        cfg.topology.path_loss,
    )
    .unwrap();
    let (_, trace) = run_episode_traced(&cfg, &t, Policy::FixedMaxPower, 12).unwrap();
    let c: Vec<f64> = trace.rate.iter().map(|r| r[0]).collect();
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let want = mean_rayleigh_capacity(cfg.p_max_w(), t.gain[0][0], cfg.noise_w(), cfg.sinr_gap);
    let se = (var / n).sqrt();
    assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
}

#[test]
fn cellular_baseline_serves_one_pair_per_slot() {
    let cfg = small_cfg();
    let t = topo(&cfg, 10);
    let (_, trace) = run_episode_traced(&cfg, &t, Policy::CellularTdma, 2).unwrap();
    for s in &trace.sigma {
        assert_eq!(s.iter().filter(|&&x| x).count(), 1);
    }
}

#[test]
fn invalid_config_is_rejected() {
    let cfg = SimConfig {
        horizon_slots: 0,
        ..SimConfig::default()
    };
    assert!(monte_carlo(&cfg, &Policy::ALL, 1).is_err());
}

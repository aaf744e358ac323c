//! Draws a random topology, then checks the carrier-sensing MAC's access
//! frequencies against `1/(|N_k| + 1)`.
//!
//! `cargo run --release --example topology_mac -- [seed] [slots]`

use d2d_power::mac::sample_mac_output;
use d2d_power::rng::{stream_rng, Stream};
use d2d_power::topology::{generate_topology, TopologyParams};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let slots: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);

    let topo = generate_topology(&TopologyParams::default(), seed).expect("valid parameters");
    print!("{}", topo.summary());

    let k = topo.num_pairs();
    let mut counts = vec![0usize; k];
    let mut max_active = 0;
    let mut rng = stream_rng(seed, Stream::Mac, 0);
    for _ in 0..slots {
        let out = sample_mac_output(&topo, &mut rng);
        assert!(
            out.is_feasible(&topo),
            "two sensing neighbours transmitted together"
        );
        max_active = max_active.max(out.active.len());
        for &i in &out.active {
            counts[i] += 1;
        }
    }

    println!("\npair  neighbours  expected   observed");
    for i in 0..k {
        println!(
            "{i:>4}  {:>10}  {:>8.4}  {:>9.4}",
            topo.neighbors[i].len(),
            topo.access_prob[i],
            counts[i] as f64 / slots as f64
        );
    }
    println!("\nat most {max_active} of {k} pairs active in one slot");
}

//! Sweeps the mean arrival rate through the experiment driver and prints
//! the resulting CSV. A key=value config file and overrides work the same
//! way as on the command line.
//!
//! `cargo run --release --example parameter_sweep -- [out dir] [key=value ...]`

use std::path::PathBuf;

use d2d_power::cli::{run, Command, RunSpec, SweepAxis};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sweep-out".into()));
    let mut overrides = vec![
        "sim.num_topologies=5".to_string(),
        "sim.horizon_slots=500".to_string(),
    ];
    overrides.extend(args);

    let spec = RunSpec {
        command: Command::Sweep,
        config: None,
        out: out.clone(),
        overrides,
        axis: Some(SweepAxis::ArrivalRate),
        values: vec![2.0, 4.0, 6.0, 8.0],
    };
    match run(&spec) {
        Ok(paths) => {
            print!("{}", std::fs::read_to_string(&paths[0]).unwrap());
            println!("\nmanifest: {}", out.join("manifest.json").display());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}

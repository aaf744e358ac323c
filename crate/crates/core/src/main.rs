use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use d2d_power::cli::{run, Command, RunSpec, SweepAxis};

#[derive(Parser)]
#[command(
    name = "d2d-power",
    version,
    about = "Queue-aware D2D power control experiments"
)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo comparison of every policy at one operating point.
    Run(Common),
    /// Repeat `run` over the values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// arrival_rate (Mbps), avg_power_weight, d2d_range or sensing_distance.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Solve a small one-flow MDP and compare it with the priority function.
    Oracle(Common),
    /// Export the priority function table of a representative flow.
    PriorityTable(Common),
}

#[derive(clap::Args)]
struct Common {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override one key, e.g. `--set traffic.arrival_spread=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    topologies: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn spec(command: Command, c: Common, axis: Option<SweepAxis>, values: Vec<f64>) -> RunSpec {
    let mut overrides = c.overrides;
    if let Some(n) = c.topologies {
        overrides.push(format!("sim.num_topologies={n}"));
    }
    if let Some(t) = c.slots {
        overrides.push(format!("sim.horizon_slots={t}"));
    }
    if let Some(s) = c.seed {
        overrides.push(format!("sim.seed={s}"));
    }
    RunSpec {
        command,
        config: c.config,
        out: c.out,
        overrides,
        axis,
        values,
    }
}

fn main() -> ExitCode {
    let spec = match Args::parse().command {
        Cmd::Run(c) => spec(Command::Run, c, None, vec![]),
        Cmd::Sweep {
            common,
            axis,
            values,
        } => spec(Command::Sweep, common, Some(axis), values),
        Cmd::Oracle(c) => spec(Command::Oracle, c, None, vec![]),
        Cmd::PriorityTable(c) => spec(Command::PriorityTable, c, None, vec![]),
    };
    match run(&spec) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

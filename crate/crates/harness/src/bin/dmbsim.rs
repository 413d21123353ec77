use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use dmbsim::acceptance;
use dmbsim::compare::{compare_csv, compare_protocols};
use dmbsim::config::ScenarioConfig;
use dmbsim::report::{self, Status};
use dmbsim::runner::{master_round_trip, run_experiment, AsyncConstants};
use dmbsim::sweep::{parse_axis, run_sweep};
use dmbsim_core::learn::bounds::{admb_regret_bound, dmb_regret_bound, mawo_mu_bound, serial_psi_bound};
use dmbsim_core::record::ProtocolKind;

#[derive(Parser)]
#[command(
    name = "dmbsim",
    version,
    about = "Distributed mini-batch online prediction on a simulated network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write every simulator event to trace.log.
        #[arg(long)]
        trace: bool,
    },
    /// Run a grid of scenarios in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid axis such as `b=8,16,32`, `seed=0..10` or `t=0.5:2:0.5`; repeatable.
        #[arg(long = "sweep", required = true)]
        axes: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the acceptance suite.
    Check,
    /// Print the bound values for a scenario without simulating.
    Describe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the scenario against the serial algorithm on identical streams.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Seeds to pair, as a sweep range (`0..10`, `1,2,3`).
        #[arg(long, default_value = "0..10")]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        serial_batch: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut c = ScenarioConfig::parse(&text)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    c.to_scenario()?;
    Ok(c)
}

fn describe(c: &ScenarioConfig) -> anyhow::Result<()> {
    let s = c.to_scenario()?;
    let topo = s.build_topology()?;
    let model = s.build_model()?;
    let (d, l, var) = (model.diameter(), model.smoothness, model.variance);
    println!("protocol {}", s.protocol.name());
    println!("nodes {} diameter {}", topo.len(), topo.diameter());
    println!("D {d} L {l} sigma^2 {var} b {} m {}", s.batch, s.m);
    println!("serial psi(sigma^2, m) {}", serial_psi_bound(d, l, var, s.m));
    println!(
        "mini-batch bound with mu = 0 {}",
        dmb_regret_bound(s.batch, 0, d, l, var, s.m)
    );
    match s.protocol {
        ProtocolKind::Mawo | ProtocolKind::MawoDb => {
            let mu = mawo_mu_bound(s.rate.into(), s.send_period, master_round_trip(&s), s.update_time);
            println!("dropped inputs per epoch at most {mu}");
            println!(
                "mini-batch bound with that mu {}",
                dmb_regret_bound(s.batch, mu.ceil() as u64, d, l, var, s.m)
            );
        }
        ProtocolKind::Admb => {
            let k = AsyncConstants::of(&s, topo.diameter());
            let b = admb_regret_bound(s.batch, s.send_period, k.diameter, s.rate.into(), d, l, var, s.m);
            println!("propagation time (t+2)d' {}", k.propagation);
            println!("good period examples b+2(t+2)d'M {}", k.period);
            println!(
                "asynchronous bound exact sum {} closed form {}",
                b.exact_sum, b.closed_form
            );
        }
        _ => {}
    }
    Ok(())
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            trace,
        } => {
            let c = load(&config, seed)?;
            let o = run_experiment(&c, trace)?;
            report::write_all(&o, &out)?;
            for r in &o.summary.rows {
                if r.status != Status::Info {
                    println!(
                        "{} {} {} {}",
                        r.status.name(),
                        r.name,
                        r.value,
                        r.bound.unwrap_or(f64::NAN)
                    );
                }
            }
            o.summary.passed()
        }
        Command::Sweep { config, axes, out } => {
            let c = load(&config, None)?;
            let axes = axes.iter().map(|a| parse_axis(a)).collect::<anyhow::Result<Vec<_>>>()?;
            run_sweep(&c, &axes, &out)?
        }
        Command::Check => {
            let results = acceptance::run_all();
            for r in &results {
                println!("{r}");
            }
            results.iter().all(|r| r.passed)
        }
        Command::Describe { config, seed } => {
            describe(&load(&config, seed)?)?;
            true
        }
        Command::Compare {
            config,
            seeds,
            serial_batch,
            out,
        } => {
            let c = load(&config, None)?;
            let seeds: Vec<u64> = parse_axis(&format!("seed={seeds}"))?
                .values
                .iter()
                .map(|v| *v as u64)
                .collect();
            let checkpoints: Vec<u64> = [1_000, 10_000, 100_000, 1_000_000]
                .into_iter()
                .filter(|x| *x <= c.m)
                .collect();
            let rows = compare_protocols(&c, serial_batch, &seeds, &checkpoints)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("compare.csv"), compare_csv(&rows))?;
            for r in &rows {
                println!("seed {} m {} ratio {}", r.seed, r.checkpoint, r.ratio);
            }
            if c.protocol == dmbsim::config::ProtocolName::Admb {
                println!("note: the asynchronous bound's leading term is 4Dσ√m against 2Dσ√m for the serial one");
            }
            true
        }
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spg_core::harness::{self, ExperimentConfig};
use spg_core::Error;

#[derive(Parser)]
#[command(name = "spg", version, about = "Stochastic potential game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML sections, or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics.csv, events.jsonl, potential_report.json and checkpoints.
    Train(Common),
    /// Estimate a potential function from reward derivatives.
    EstimatePotential(Common),
    /// Check the environment's closed-form potential on random deviations.
    CheckPotential {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        probes: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Exploitability of actors saved by `train`.
    Exploitability {
        #[command(flatten)]
        common: Common,
        /// Run id as written in metrics.csv.
        #[arg(long)]
        run_id: String,
    },
    /// Run every value of the config's `[sweep]` section into one CSV.
    Sweep(Common),
    /// Reference solutions: value iteration on an action grid, or routing flows.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[command(subcommand)]
        kind: OracleKind,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum OracleKind {
    /// Value iteration on a uniform per-agent action grid.
    Grid {
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
    /// Best-response dynamics under every flow and time model.
    Flows,
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(&common.config)?;
    let mut cfg = harness::parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.run.out = out.clone();
    }
    Ok(cfg)
}

fn seed(cfg: &ExperimentConfig) -> u64 {
    cfg.run.seeds[0]
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Train(common) | Command::Sweep(common) => {
            let cfg = load(&common)?;
            let summary = harness::run_experiment(&cfg)?;
            println!(
                "{} rows written to {}",
                summary.rows.len(),
                cfg.run.out.join("metrics.csv").display()
            );
        }
        Command::EstimatePotential(common) => {
            let cfg = load(&common)?;
            let report = harness::estimate(&cfg, seed(&cfg))?;
            fs::create_dir_all(&cfg.run.out)?;
            fs::write(cfg.run.out.join("potential_report.json"), serde_json::to_string_pretty(&report)?)?;
            print_json(&report)?;
        }
        Command::CheckPotential { common, probes, tol } => {
            let cfg = load(&common)?;
            let report = harness::check(&cfg, seed(&cfg), probes, tol)?;
            print_json(&report)?;
            if !report.pass {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Exploitability { common, run_id } => {
            let cfg = load(&common)?;
            print_json(&harness::exploitability_of_checkpoint(&cfg, &run_id, seed(&cfg))?)?;
        }
        Command::Oracle { common, kind } => {
            let cfg = load(&common)?;
            match kind {
                OracleKind::Grid { points } => print_json(&harness::oracle_value_iteration(&cfg, points, seed(&cfg))?)?,
                OracleKind::Flows => {
                    for (model, time, eq) in harness::oracle_flows(&cfg)? {
                        print_json(&serde_json::json!({"model": model, "time": time, "equilibrium": eq}))?;
                    }
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LOG_LEVEL", "info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e @ Error::UnknownEnv { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line front end.
//!
//! Three subcommands: `run` executes one experiment config and writes the
//! per-round CSV plus a JSON summary, `sweep` runs a θ × horizon × replicate
//! grid and fits the scaling exponents, and `verify` runs one of the
//! self-contained verification batteries, printing one line per check and
//! exiting nonzero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gossipmax::harness::{self, verify, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "gossipmax",
    version,
    about = "Decentralized online up-concave maximization over a gossiping agent network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV and summary JSON.
    Run(RunArgs),
    /// Run a θ × horizon grid and fit regret/communication/LOO exponents.
    Sweep(SweepArgs),
    /// Run a verification battery; exits nonzero if any check fails.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Master seed override; defaults to `seeds.master` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (JSON); its θ and T are overridden per grid cell.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated θ values, e.g. 0.5,0.75,1.0.
    #[arg(long, value_delimiter = ',', required = true)]
    theta: Vec<f64>,
    /// Comma-separated horizons, e.g. 2500,5000,10000,20000.
    #[arg(long, value_delimiter = ',', required = true)]
    horizons: Vec<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Replicates per cell, seeded master, master+1, …
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Battery to run.
    #[arg(long, value_enum)]
    suite: Suite,
}

#[derive(Copy, Clone, ValueEnum)]
enum Suite {
    /// Pseudo-projection contract on randomized bodies.
    Geometry,
    /// Sampling laws, oracle unbiasedness, linearization margins.
    Objectives,
    /// Regret/communication/LOO scaling of all five drivers, the residual
    /// audit, and worker-count determinism.
    Scaling,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let config = ExperimentConfig::from_path(&args.config)?;
            let seed = args.seed.unwrap_or(config.seeds.master);
            let artifacts = with_workers(args.workers, || {
                harness::run_experiment(&config, &args.out, seed)
            })?;
            let run = &artifacts.executed;
            println!(
                "run {} ({} {}, θ={}, T={}): mean final regret {:.4}",
                run.run_id,
                config.algorithm.variant,
                config.algorithm.case,
                config.algorithm.theta,
                config.algorithm.horizon,
                run.mean_final_regret()
            );
            println!("rounds: {}", artifacts.csv_path.display());
            println!("summary: {}", artifacts.json_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let config = ExperimentConfig::from_path(&args.config)?;
            let outcome = with_workers(args.workers, || {
                harness::run_sweep(&config, &args.theta, &args.horizons, args.seeds, &args.out)
            })?;
            println!("{} runs finished", outcome.jobs.len());
            for fit in &outcome.fits {
                println!(
                    "θ={}: regret slope {:.3}{}, comm slope {:.3}, query slope {:.3}, LOO slope {:.3}",
                    fit.theta,
                    fit.regret.slope,
                    if fit.regret.clamped { " (clamped)" } else { "" },
                    fit.comm.slope,
                    fit.query.slope,
                    fit.loo.slope,
                );
            }
            if outcome.fits.is_empty() {
                println!("fewer than four horizons: no slope fits");
            }
            println!("summary: {}", outcome.summary_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let outcomes = match args.suite {
                Suite::Geometry => verify::geometry_suite(),
                Suite::Objectives => verify::objectives_suite(),
                Suite::Scaling => verify::scaling_suite(),
            };
            let mut all_passed = true;
            for outcome in &outcomes {
                println!("{outcome}");
                all_passed &= outcome.passed;
            }
            Ok(if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

/// Runs `job` on a dedicated pool of `workers` threads when a count is given
/// (and the parallel feature is on); otherwise on the default pool.
fn with_workers<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> Result<T, HarnessError> + Send,
) -> Result<T, HarnessError> {
    match workers {
        #[cfg(feature = "parallel")]
        Some(count) => rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .expect("thread pool")
            .install(job),
        #[cfg(not(feature = "parallel"))]
        Some(_) => job(),
        None => job(),
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use edgesim_core::config::LoadError;
use edgesim_core::harness::{self, HarnessError, RunOptions, RunSummary, Scheme};
use edgesim_core::oracle::{OracleError, DEFAULT_MAX_ITER};
use edgesim_core::{Config, EdgeSystem};

/// Simulator for energy-harvesting edge systems: exact solver, online
/// learners and baselines.
#[derive(Parser)]
#[command(name = "edgesim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the MDP exactly and dump C*, V* and the optimal policy.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Value-iteration sweep cap.
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Simulate one scheme.
    Run {
        #[arg(long, default_value = "pds")]
        scheme: String,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Simulate several schemes under common random numbers and rank them.
    Compare {
        /// Comma-separated; defaults to pds,q,myopic,fixed:50,fixed:100,fixed:150.
        #[arg(long)]
        schemes: Option<String>,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Args)]
struct SimArgs {
    /// JSON config; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    slots: u64,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump per-slot exogenous draws.
    #[arg(long)]
    trace: bool,
}

impl SimArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            slots: self.slots,
            runs: self.runs,
            base_seed: self.seed,
            trace: self.trace,
        }
    }
}

enum Failure {
    Invalid(String),
    NonConvergence(String),
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Oracle(e @ OracleError::NonConvergence { .. }) => Failure::NonConvergence(e.to_string()),
            e => Failure::Invalid(e.to_string()),
        }
    }
}

fn load(path: Option<&Path>) -> Result<Arc<EdgeSystem>, Failure> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    Ok(Arc::new(EdgeSystem::new(cfg)))
}

fn print_summary(summary: &RunSummary) {
    println!("{:<12} {:>14} {:>14} {:>12} {:>8}", "scheme", "running_avg", "discounted", "mean_b_wh", "backup");
    for s in &summary.schemes {
        println!(
            "{:<12} {:>14.4} {:>14.4} {:>12.1} {:>8.3}",
            s.scheme, s.final_running_average, s.mean_discounted_cost, s.mean_battery_wh, s.backup_fraction
        );
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { config, out, max_iter } => {
            let sys = load(config.as_deref())?;
            let report = harness::solve(&sys, max_iter, Some(&out))?;
            println!(
                "solved {} states in {} sweeps; max consistency residual {:e}",
                report.tables.c_star.len(),
                report.tables.iterations,
                report.max_residual()
            );
        }
        Command::Run { scheme, sim } => {
            let sys = load(sim.config.as_deref())?;
            let scheme: Scheme = scheme.parse()?;
            let (summary, _) = harness::run_experiment(&sys, scheme, &sim.options(), sim.out.as_deref())?;
            print_summary(&summary);
        }
        Command::Compare { schemes, sim } => {
            let sys = load(sim.config.as_deref())?;
            let schemes = match schemes {
                Some(list) => harness::parse_schemes(&list)?,
                None => Scheme::default_lineup(),
            };
            let (summary, cmp, _) = harness::compare(&sys, &schemes, &sim.options(), sim.out.as_deref())?;
            print_summary(&summary);
            println!("best: {}", cmp.best);
            for r in cmp.ranking.iter().skip(1) {
                println!("  {:.1}% below {}", 100.0 * r.reduction, r.scheme);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NonConvergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

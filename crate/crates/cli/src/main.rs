use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neohook_core::checkpoint::Checkpoint;
use neohook_core::par;
use neohook_core::scenario::{self, CaseSet, RunError, Scenario};

/// Batch driver for the neo-Hookean solver and the inequality lab.
///
/// Exit status: 0 success, 1 other failure, 2 config parse error,
/// 3 inadmissible parameters, 4 numerical abort (partial artifacts written).
/// `NEOHOOK_THREADS` sets the worker thread count.
#[derive(Parser)]
#[command(name = "neohook", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: diagnostics CSV, lab reports and final checkpoint.
    Run {
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario for several mollifier scales and tabulate differences.
    EpsFamily {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a lab case set and write one JSON report per case.
    Lab {
        case_set: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the header and component summary of a checkpoint.
    Inspect { checkpoint: PathBuf },
}

fn threads_from_env() -> Result<(), RunError> {
    match std::env::var("NEOHOOK_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| RunError::Config(format!("NEOHOOK_THREADS={v:?} is not a thread count")))?;
            par::init_threads(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn out_dir(given: Option<PathBuf>, configured: &Path) -> PathBuf {
    given.unwrap_or_else(|| configured.to_path_buf())
}

fn execute(cmd: Command) -> Result<(), RunError> {
    threads_from_env()?;
    match cmd {
        Command::Run { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let dir = out_dir(out, &sc.output.dir);
            let summary = scenario::run(&sc, &dir)?;
            println!("{}: {} steps to t = {}", sc.name, summary.steps, summary.final_state.t);
            if let Some(a) = &summary.apriori {
                println!(
                    "a priori: besov integral {:.6e}, sup integral {:.6e} (q = {})",
                    a.besov_integral, a.sup_integral, a.sup_exponent
                );
            }
            for r in &summary.lab {
                println!("lab {}: max ratio {:.6e}", r.id, r.max_ratio);
            }
            for p in &summary.artifacts {
                println!("wrote {}", p.display());
            }
        }
        Command::EpsFamily { scenario, eps, out } => {
            let sc = Scenario::load(&scenario)?;
            let dir = out_dir(out, &sc.output.dir);
            let table = scenario::eps_family(&sc, &eps, &dir)?;
            println!("{:>12} {:>12} {:>6} {:>14}", "eps", "eps_next", "s", "sup_diff");
            for r in &table.rows {
                println!("{:>12.6e} {:>12.6e} {:>6} {:>14.6e}", r.eps, r.eps_next, r.s, r.sup_diff);
            }
            if !table.strictly_decreasing() {
                log::warn!("differences do not decrease strictly with ε");
            }
        }
        Command::Lab { case_set, out } => {
            let set = CaseSet::load(&case_set)?;
            let dir = out_dir(out, &set.output.dir);
            for r in scenario::run_lab(&set, &dir)? {
                let slope = r.refinement_slope.map_or("-".to_string(), |s| format!("{s:.4}"));
                println!("{:<28} max ratio {:.6e}  slope {}", r.id, r.max_ratio, slope);
            }
        }
        Command::Inspect { checkpoint } => {
            let c = Checkpoint::load(&checkpoint)?;
            print!("{}", c.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

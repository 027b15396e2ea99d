use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ganmpc::ganmpc::Algorithm;
use ganmpc_lab::config::{parse_imitator, ExperimentConfig, OUT_ENV};
use ganmpc_lab::demos::collect_demos;
use ganmpc_lab::evaluate::{evaluate_run, EvalOptions};
use ganmpc_lab::report::{build_report, checks, collect_runs};
use ganmpc_lab::run::run_training;
use ganmpc_lab::Result;

/// Adversarially trained MPC imitation across dynamics mismatch.
#[derive(Parser)]
#[command(name = "ganmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the scripted expert and write the demonstration file.
    DemoCollect {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train one (algorithm, imitator, seed) run.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// gan_mpc, l2_mpc_sa, l2_mpc_s or bc.
        #[arg(long)]
        algorithm: String,
        /// Pole-mass scale `p`, or `p,c,d` scales of pole mass, cart mass and dimensions.
        #[arg(long)]
        imitator: String,
        #[arg(long)]
        seed: u64,
    },
    /// Evaluate a run's final checkpoint and write eval.json.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// Also write the iLQR solves along the first evaluation episode.
        #[arg(long, value_name = "FILE")]
        dump_ilqr_trace: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        trace_steps: usize,
    },
    /// Tabulate evaluated runs.
    Report {
        /// Glob matching run directories.
        #[arg(long)]
        runs: String,
        /// Exit with status 2 if a threshold check fails.
        #[arg(long)]
        check: bool,
        /// Output directory; defaults to `$GANMPC_OUT/report` or `report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::DemoCollect { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let set = collect_demos(&cfg)?;
            println!(
                "wrote {} trajectories to {} (mean reward {:.4}, blob {})",
                set.trajectories.len(),
                set.path.display(),
                set.mean_reward(),
                set.hash
            );
        }
        Command::Train {
            config,
            algorithm,
            imitator,
            seed,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = run_training(&cfg, Algorithm::parse(&algorithm)?, parse_imitator(&imitator)?, seed)?;
            println!("{}", dir.display());
        }
        Command::Eval {
            run,
            dump_ilqr_trace,
            trace_steps,
        } => {
            let doc = evaluate_run(&run, &EvalOptions { dump_ilqr_trace, trace_steps })?;
            let r = &doc.result;
            println!(
                "{} {}: relative reward {:.4} ± {:.4} (imitator {:.2}, demonstrator {:.2}, {} episodes)",
                doc.label,
                run.display(),
                r.relative_reward,
                r.relative_std,
                r.imitator_mean,
                r.demonstrator_mean,
                r.imitator_rewards.len()
            );
        }
        Command::Report { runs, check, out } => {
            let summaries = collect_runs(&runs)?;
            let report = build_report(&summaries);
            let out = out.unwrap_or_else(|| match std::env::var_os(OUT_ENV) {
                Some(o) => PathBuf::from(o).join("report"),
                None => PathBuf::from("report"),
            });
            report.write(&out)?;
            print!("{}", report.text());
            let mut failed = !report.incomplete.is_empty();
            if check {
                for c in checks(&report, &summaries) {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                    failed |= !c.passed;
                }
            }
            if failed {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // usage errors exit with 1; 2 is reserved for failed report checks
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

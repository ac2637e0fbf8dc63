use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use offline_lcb::eval::{self, ExperimentConfig, OUTPUT_ENV};
use offline_lcb::Error;

#[derive(Parser)]
#[command(name = "offline-lcb", version, about = "Offline contextual-bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (TOML, or JSON by extension).
    Run {
        config: PathBuf,
        /// Output directory; overrides the config and the environment root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved policy on a dataset CSV or an environment config.
    Eval {
        policy_dir: PathBuf,
        data: PathBuf,
        #[arg(long, default_value_t = 3250)]
        eval_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a results directory.
    Report { results_dir: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let root = std::env::var_os(OUTPUT_ENV).map(PathBuf::from);
            let dir = out.unwrap_or_else(|| cfg.output_dir(root.as_deref()));
            let result = eval::run_experiment(&cfg, &dir)?;
            println!("{} jobs written to {}", result.jobs.len(), dir.display());
            for r in &result.regret {
                println!("n={:<6} beta={:<4} subopt {:.4} ± {:.4}", r.train_size, r.beta, r.mean_subopt, r.std_subopt);
            }
        }
        Command::Eval {
            policy_dir,
            data,
            eval_size,
            seed,
        } => {
            let s = eval::evaluate_policy_dir(&policy_dir, &data, eval_size, seed)?;
            let kind = if s.replay { "replay estimate" } else { "exact" };
            println!("sub-optimality {:.6} over {} contexts ({kind})", s.subopt, s.count);
            for g in &s.groups {
                println!("  group {}: {:.6} over {}", g.group, g.subopt, g.count);
            }
            println!("mean penalty {:.6}", s.mean_penalty);
        }
        Command::Report { results_dir } => print!("{}", eval::report(&results_dir)?),
    }
    Ok(())
}

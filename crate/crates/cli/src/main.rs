mod bench;
mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "rdp-forge", version, about = "Offline RDP learning and planning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a dataset from an environment under the uniform policy.
    Gen(RunConfig),
    /// Learn an RDP from a dataset.
    Learn(RunConfig),
    /// Plan on a learned RDP and evaluate the policy in the environment.
    Eval(RunConfig),
    /// Run the domain x tester grid, or tabulate existing eval outputs.
    Bench {
        #[command(flatten)]
        cfg: RunConfig,
        /// Metrics files written by `eval --out`; no learning is run.
        #[arg(long, num_args = 1.., value_name = "PATH")]
        aggregate: Vec<PathBuf>,
        /// Run rows concurrently; learn times are then left out.
        #[arg(long)]
        parallel: bool,
    },
    /// Empirical checks of the concentration and reduction results.
    Lemmas {
        #[command(flatten)]
        cfg: RunConfig,
        #[arg(long, default_value_t = 500)]
        trials: usize,
    },
}

fn print(v: &Value) {
    emit(&serde_json::to_string_pretty(v).expect("serializable"));
}

// a closed pipe (`| head`) is not an error worth reporting
fn emit(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", s.trim_end()).and_then(|_| out.flush());
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Gen(f) => print(&commands::gen(&RunConfig::resolve(&f)?)?),
        Cmd::Learn(f) => print(&commands::learn(&RunConfig::resolve(&f)?)?),
        Cmd::Eval(f) => print(&commands::eval(&RunConfig::resolve(&f)?)?),
        Cmd::Bench { cfg, aggregate, parallel } => {
            let cfg = RunConfig::resolve(&cfg)?;
            let table =
                if aggregate.is_empty() { bench::run_grid(&cfg, parallel)? } else { bench::aggregate(&aggregate, &cfg)? };
            if let Some(out) = &cfg.out {
                let md = bench::write_table(&table, out)?;
                log::info!("wrote {} and {}", out.display(), md.display());
            }
            emit(&bench::render_markdown(&table));
        }
        Cmd::Lemmas { cfg, trials } => {
            if trials == 0 {
                return Err(CliError::Validation("--trials must be at least 1".into()));
            }
            let (report, pass) = commands::lemmas(&RunConfig::resolve(&cfg)?, trials)?;
            print(&report);
            if !pass {
                return Err(CliError::Runtime("one or more checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RDP_FORGE_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `sll`: dataset conversion, initialization, streaming runs, evaluation,
//! the binary relevance baseline and the bound checks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;
use error::CliError;

#[derive(Parser)]
#[command(name = "sll", version, about = "Streaming label learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable, wins over the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads (capped by SLL_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a dataset file (input -> output).
    Convert,
    /// Write a synthetic train/test pair with planted label structure.
    Synth,
    /// Train the initial model on the schedule's past labels.
    Init,
    /// Stream the remaining labels and write per-step metrics.
    Stream,
    /// Evaluate a saved model on every label it knows.
    Eval,
    /// Stream with independent per-label classifiers.
    Br,
    /// Check the approximation bound on a seeded sweep.
    Verify,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let env = match std::env::var("SLL_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::config(format!("SLL_THREADS must be a positive integer, got '{}'", v)))?,
        ),
        Err(_) => None,
    };
    if flag == Some(0) {
        return Err(CliError::config("--threads must be >= 1"));
    }
    Ok(match (flag, env) {
        (Some(f), Some(e)) => Some(f.min(e)),
        (f, e) => f.or(e),
    })
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let cfg = Config::load(cli.config.as_deref(), &cli.set)?;
    let outcome = match cli.command {
        Command::Convert => commands::cmd_convert(&cfg)?,
        Command::Synth => commands::cmd_synth(&cfg)?,
        Command::Init => commands::cmd_init(&cfg)?,
        Command::Stream => commands::cmd_stream(&cfg)?,
        Command::Eval => commands::cmd_eval(&cfg)?,
        Command::Br => commands::cmd_br(&cfg)?,
        Command::Verify => commands::cmd_verify(&cfg)?,
    };
    if outcome.exit_code() != 0 {
        eprintln!("warning: some solver calls stopped before reaching their tolerance; results were written");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.code as u8)
        }
    }
}

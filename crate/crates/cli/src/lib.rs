//! Command-line front end for the Bayes-adaptive experiments.

pub mod config;
pub mod emit;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::run::Command;

#[derive(Debug, Parser)]
#[command(name = "brl", version, about = "Exact Bayes-adaptive solvers, mirror descent and stability experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,

    /// TOML run configuration; every key has a default.
    #[arg(long, global = true, env = "BRL_CONFIG")]
    pub config: Option<PathBuf>,

    /// Root seed, overriding the configuration.
    #[arg(long, global = true, env = "BRL_SEED")]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, env = "BRL_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Worker threads; all available cores when absent.
    #[arg(long, global = true, env = "BRL_WORKERS")]
    pub workers: Option<usize>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Cmd {
    /// Exact regularized policy and values on the prior.
    Solve,
    /// ERM on a sample of the prior and its regret on the prior.
    Erm,
    /// Leave-one-out stability reports for every sample index.
    Stability,
    /// Regret and bound values over sample sizes, lambdas and seeds.
    Sweep,
    /// Adversarial lower-bound family runs.
    Lowerbound,
    /// Mirror-descent trace with rate, one-step and growth checks.
    Convergence,
    /// Closed-form bound values.
    Bounds,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Erm => Command::Erm,
            Cmd::Stability => Command::Stability,
            Cmd::Sweep => Command::Sweep,
            Cmd::Lowerbound => Command::Lowerbound,
            Cmd::Convergence => Command::Convergence,
            Cmd::Bounds => Command::Bounds,
        }
    }
}

/// Configuration after applying the file and flag overrides.
pub fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if cli.workers == Some(0) {
        return Err(CliError::Config("workers must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run::run(cli.command.into(), &cfg, &cli.out))?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    outcome.into_result().map(|_| ())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::Config(first.to_string()).line());
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

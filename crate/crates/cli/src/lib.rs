//! Batch front-end: configuration, data ingestion, run orchestration and
//! artifact persistence for CA-EDP mediation analyses.
//!
//! Settings resolve in increasing priority: built-in defaults, the
//! `--config` file, `--set key=value` pairs, then `--seed`, `--out` and
//! `--threads`. Without `--threads` or a `threads` key the thread count
//! comes from `CAEDP_THREADS`, else from rayon's default.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::execute;
pub use config::{Command, RunConfig};
pub use error::CliError;

pub const THREADS_ENV: &str = "CAEDP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "caedp", version, about = "CA-EDP mediation analysis for cluster-randomized trials")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Run the Gibbs sampler and save posterior draws and log-likelihoods.
    Fit,
    /// Posterior g-computation of TE, NIE, NDE, SME and IME.
    Gcompute,
    /// Estimands under each cross-world correlation mode.
    Sensitivity,
    /// Simulation benchmark of one scenario.
    Simulate,
    /// LPML and CPO from saved log-likelihoods.
    Diagnose,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Fit => Command::Fit,
            Cmd::Gcompute => Command::Gcompute,
            Cmd::Sensitivity => Command::Sensitivity,
            Cmd::Simulate => Command::Simulate,
            Cmd::Diagnose => Command::Diagnose,
        }
    }
}

fn resolve(cli: &Cli) -> Result<(Command, RunConfig), CliError> {
    let command = Command::from(cli.command);
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--set {kv:?}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim()).map_err(|m| CliError::Validation(format!("--set: {m}")))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(c) = cfg.command {
        if c != command {
            return Err(CliError::Validation(format!(
                "configuration is for {}, not {}",
                c.name(),
                command.name()
            )));
        }
    }
    Ok((command, cfg))
}

fn thread_count(cfg: &RunConfig) -> Result<Option<usize>, CliError> {
    if cfg.threads.is_some() {
        return Ok(cfg.threads);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Resolves the configuration and runs the command on a dedicated pool.
pub fn run_args<I, T>(args: I) -> Result<Vec<String>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Validation(e.to_string()))?;
    let (command, cfg) = resolve(&cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(&cfg)? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| execute(command, &cfg))
}

/// Entry point returning the process exit code: 0 success, 1 validation
/// error, 2 runtime error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Err(e) = Cli::try_parse_from(&args) {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            print!("{e}");
            return 0;
        }
    }
    match run_args(args) {
        Ok(names) => {
            for n in names {
                println!("wrote {n}");
            }
            0
        }
        Err(e) => {
            eprintln!("caedp: {e}");
            e.exit_code()
        }
    }
}

//! Command-line pipeline: synthetic scenarios, vocabulary, pretraining,
//! fine-tuning, rollout dumps and evaluation reports.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Invalid or missing configuration; exit code 2.
    Config(String),
    /// Failure while running a command; exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tokensim::Error> for CliError {
    fn from(e: tokensim::Error) -> Self {
        match e {
            tokensim::Error::Validation(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "tokensim", version, about = "Tokenized traffic simulation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML or JSON config file (`.json` extension selects JSON)
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a motion-token vocabulary from the scenario directory
    VocabBuild(Common),
    /// Write synthetic scenarios to the scenario directory
    ScenarioGen(Common),
    /// Next-token pretraining; writes pretrained.json and pretrain_loss.csv
    Pretrain(Common),
    /// Group-relative fine-tuning; writes finetuned.json, checkpoints and finetune_stats.csv
    Finetune(Common),
    /// Roll out a group on one scenario and dump it as rollout.json
    Rollout(Common),
    /// Evaluate a checkpoint; writes eval.csv and eval.json
    Eval(Common),
    /// Compare entropy of two checkpoints overall and on easy/hard splits
    EntropyReport(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::VocabBuild(c)
            | Command::ScenarioGen(c)
            | Command::Pretrain(c)
            | Command::Finetune(c)
            | Command::Rollout(c)
            | Command::Eval(c)
            | Command::EntropyReport(c) => c,
        }
    }
}

/// Loads the config file, then applies command-line overrides.
pub fn effective_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    common.overrides.clone().apply(&mut cfg);
    Ok(cfg)
}

/// Runs `f` on a pool of `workers` threads (0 means all cores).
pub fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(runtime)?;
    pool.install(f)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli.command.common())?;
    let resolved = cfg.resolve()?;
    with_workers(cfg.workers, || match &cli.command {
        Command::VocabBuild(_) => commands::vocab_build(&cfg, &resolved),
        Command::ScenarioGen(_) => commands::scenario_gen(&cfg, &resolved),
        Command::Pretrain(_) => commands::pretrain(&cfg, &resolved),
        Command::Finetune(_) => commands::finetune(&cfg, &resolved),
        Command::Rollout(_) => commands::rollout(&cfg, &resolved),
        Command::Eval(_) => commands::eval(&cfg, &resolved),
        Command::EntropyReport(_) => commands::entropy_report(&cfg, &resolved),
    })
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; diagnostics go to stderr as a single line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

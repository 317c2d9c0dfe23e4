//! Command-line front end: single sessions, probability-grid batches,
//! offline analysis of saved transcripts, and distribution probes.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{analyze, batch, probe, run};
pub use config::{backend_for_session, parse_backend, FileConfig, SessionOverrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// The work itself failed. Exit status 1.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn failure(msg: impl Into<String>) -> Self {
        CliError::Failure(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "discourse",
    version,
    about = "Multi-agent deliberation sessions and their analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session and print its summary.
    Run(RunArgs),
    /// Run every probability of a grid several times and aggregate.
    Batch(BatchArgs),
    /// Recompute the report from saved transcripts.
    Analyze(AnalyzeArgs),
    /// Tally the answers to one prompt asked many times.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    /// Scenario template with a `<probability parameter>` slot. Defaults to the shipped flood scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Persona file. Defaults to the shipped flood assembly.
    #[arg(long)]
    pub personas: Option<PathBuf>,
    /// scripted:PATH, cyclic:A,B,..., uniform:LO-HI[:SEED] or http:BASE_URL
    #[arg(long)]
    pub backend: Option<String>,
    /// Model id for http backends.
    #[arg(long)]
    pub model: Option<String>,
    /// JSON config; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    #[arg(long)]
    pub moderator_period: Option<u32>,
    #[arg(long)]
    pub summon_cap: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_enum)]
    pub extraction: Option<ExtractionArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExtractionArg {
    Agent,
    Deterministic,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long, value_parser = clap::value_parser!(i64).range(0..=100))]
    pub probability: Option<i64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the transcript.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum ClassifyArg {
    #[default]
    Keyword,
    /// Label sentences with the backend, keyword fallback on bad output.
    Llm,
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// Comma-separated probabilities, e.g. 50,75,90.
    #[arg(long, value_delimiter = ',')]
    pub probabilities: Vec<i64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Session k of the grid is seeded with base_seed + k.
    #[arg(long)]
    pub base_seed: Option<u64>,
    #[arg(long, default_value = "batch")]
    pub out: PathBuf,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub classify: ClassifyArg,
    /// Concurrent sessions. Defaults to the number of grid cells.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Directory of transcript JSON files.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub classify: ClassifyArg,
    /// Needed only with `--classify llm`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Where report.json and report.csv go. Defaults to the parent of --dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParserArg {
    Integer,
    FirstNumber,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// File holding the prompt.
    #[arg(long)]
    pub prompt: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub backend: String,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum, default_value = "integer")]
    pub parser: ParserArg,
    /// Histogram bin width, e.g. 5 for IQ-style answers.
    #[arg(long)]
    pub bin_width: Option<i64>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Histogram CSV path. Printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command, writing user-facing output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run(&args, stdout),
        Command::Batch(args) => batch(&args, stdout).map(|_| ()),
        Command::Analyze(args) => analyze(&args, stdout).map(|_| ()),
        Command::Probe(args) => probe(&args, stdout).map(|_| ()),
    }
}

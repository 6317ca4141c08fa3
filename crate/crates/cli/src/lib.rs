//! The `labcast` command line: one subcommand per pipeline stage, shared
//! configuration resolution, atomic outputs with provenance manifests, and
//! JSON log lines on standard error.
//!
//! Exit codes: 0 success, 1 validation error, 2 protocol or transport error,
//! 64 usage error.

pub mod backends;
mod commands;
pub mod config;
pub mod provenance;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use labcast_core::ErrorCategory;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "labcast", version, about = "Knowledge-grounded commentary pipeline for laboratory videos")]
pub struct Cli {
    /// TOML file of flat `key = value` settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(flatten)]
    pub settings: Settings,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides for configuration keys; values are validated during resolution.
#[derive(Debug, Args, Default)]
pub struct Settings {
    /// Passages retrieved per step.
    #[arg(long, global = true)]
    pub k: Option<String>,
    /// Query fusion mode: v, vt or vtp.
    #[arg(long = "fusion", global = true)]
    pub fusion_mode: Option<String>,
    /// Nucleus sampling mass for preference sampling.
    #[arg(long, global = true)]
    pub top_p: Option<String>,
    /// Candidates sampled per step for preference pairs.
    #[arg(long = "L", visible_alias = "candidates", global = true)]
    pub candidates: Option<String>,
    /// Safety similarity threshold (LCS F1).
    #[arg(long, global = true)]
    pub sim_threshold: Option<String>,
    /// Preference pairs kept per step.
    #[arg(long, global = true)]
    pub max_pairs: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Parallel workers (videos or steps, per subcommand).
    #[arg(long, global = true)]
    pub jobs: Option<String>,
    /// Transcript segments per correction call.
    #[arg(long, global = true)]
    pub batch_size: Option<String>,
    /// Generator context budget in estimated tokens.
    #[arg(long, global = true)]
    pub max_tokens: Option<String>,
    #[arg(long, global = true)]
    pub tokens_per_word: Option<String>,
    /// mock, mock:<rules.json> or remote:<url>.
    #[arg(long, global = true)]
    pub judge: Option<String>,
    /// mock:<script.jsonl> or remote:<url>.
    #[arg(long, global = true)]
    pub generator: Option<String>,
    /// hash:<dim> or remote:<url>.
    #[arg(long, global = true)]
    pub embedder: Option<String>,
    /// remote:<url> for external metrics.
    #[arg(long, global = true)]
    pub scorer: Option<String>,
}

impl Settings {
    fn as_map(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("k", &self.k),
            ("fusion_mode", &self.fusion_mode),
            ("top_p", &self.top_p),
            ("candidates", &self.candidates),
            ("sim_threshold", &self.sim_threshold),
            ("max_pairs", &self.max_pairs),
            ("seed", &self.seed),
            ("jobs", &self.jobs),
            ("batch_size", &self.batch_size),
            ("max_tokens", &self.max_tokens),
            ("tokens_per_word", &self.tokens_per_word),
            ("judge", &self.judge),
            ("generator", &self.generator),
            ("embedder", &self.embedder),
            ("scorer", &self.scorer),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_owned(), v.clone())))
            .collect()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn transcripts into step records (parallel unit: video).
    Curate(commands::CurateArgs),
    /// Dataset statistics and quality flags.
    Stats(commands::StatsArgs),
    /// Build and save the passage index.
    BuildIndex(commands::BuildIndexArgs),
    /// Build the control-token training corpus (parallel unit: step).
    PrepareSft(commands::PrepareSftArgs),
    /// Build safety preference pairs (parallel unit: step).
    PrepareDpo(commands::PrepareDpoArgs),
    /// Run staged inference over videos (parallel unit: video).
    Infer(commands::InferArgs),
    /// Score predictions against references.
    Evaluate(commands::EvaluateArgs),
}

/// An error with the category that decides the exit code.
#[derive(Debug)]
pub struct Failure {
    pub category: ErrorCategory,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(category: ErrorCategory, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            category,
            error: error.into(),
        }
    }

    pub fn validation(error: impl Into<anyhow::Error>) -> Self {
        Failure::new(ErrorCategory::Validation, error)
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            ErrorCategory::Validation => EXIT_VALIDATION,
            ErrorCategory::Protocol | ErrorCategory::Transport => EXIT_BACKEND,
        }
    }
}

/// The error chain joined by ": ", skipping causes already spelled out by
/// the message before them.
pub fn describe(error: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn init_logging(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(level))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(filter)
        .with_target(false)
        .try_init();
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I, env: &BTreeMap<String, String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cli.log_level);
    match commands::dispatch(&cli, env) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            tracing::error!(category = f.category.as_str(), error = describe(&f.error), "command failed");
            f.exit_code()
        }
    }
}

//! `lumen` command-line driver.

pub mod bench;
mod data;
mod llm;
mod model;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use bench::{fraction_sweep, shots_sweep, BenchReport, ResponseItem};

#[derive(Debug, Parser)]
#[command(name = "lumen", version, about = "Depression-text analysis and supportive dialogue toolkit")]
pub struct Cli {
    /// Seed for every random choice (splits, training, LIME, synthesis).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL corpus and print a summary.
    Ingest(data::IngestArgs),
    /// Write a stratified train/val/test split manifest.
    Split(data::SplitArgs),
    /// Self-train a classifier and admit confident pseudo-labels.
    Pseudolabel(data::PseudolabelArgs),
    /// Train a classifier and write a checkpoint.
    Train(model::TrainArgs),
    /// Score a checkpoint on a labeled partition.
    Eval(model::EvalArgs),
    /// Explain one prediction with LIME.
    Explain(model::ExplainArgs),
    /// Diagnose one post with the classifier, the LLM or both.
    Diagnose(llm::DiagnoseArgs),
    /// Interactive supportive chat in the terminal.
    Chat(llm::ChatArgs),
    /// Run the HTTP service.
    Serve(llm::ServeArgs),
    /// Few-shot F1 or response-similarity sweeps.
    Bench(bench::BenchArgs),
    /// Generate the synthetic two-class corpus.
    Synth(data::SynthArgs),
}

/// Backend selection shared by the LLM-facing subcommands.
#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Backend configuration JSON (mock or http).
    #[arg(long, conflicts_with = "mock_script")]
    pub backend: Option<PathBuf>,
    /// Shorthand for a mock backend with this JSONL script.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Reply for mock requests no script entry matches.
    #[arg(long)]
    pub mock_default: Option<String>,
    /// Overrides the configured model id.
    #[arg(long)]
    pub model_id: Option<String>,
}

impl BackendArgs {
    pub fn config(&self) -> anyhow::Result<lumen_core::llmclient::BackendConfig> {
        let mut cfg = match &self.backend {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => {
                lumen_core::llmclient::BackendConfig { mock_script: self.mock_script.clone(), ..Default::default() }
            }
        };
        if self.mock_default.is_some() {
            cfg.mock_default = self.mock_default.clone();
        }
        if let Some(m) = &self.model_id {
            cfg.model_id = m.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Train,
    Val,
    Test,
}

impl From<PartitionArg> for lumen_core::corpus::Partition {
    fn from(p: PartitionArg) -> Self {
        match p {
            PartitionArg::Train => Self::Train,
            PartitionArg::Val => Self::Val,
            PartitionArg::Test => Self::Test,
        }
    }
}

/// Writes pretty JSON with a trailing newline to `path`, or stdout.
pub(crate) fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `argv` and runs the subcommand. Returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for anything else.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(a) => data::ingest(&a),
        Command::Split(a) => data::split(&a, seed),
        Command::Pseudolabel(a) => data::pseudolabel(&a, seed),
        Command::Train(a) => model::train(&a, seed),
        Command::Eval(a) => model::eval(&a),
        Command::Explain(a) => model::explain(&a, seed),
        Command::Diagnose(a) => llm::diagnose(&a, seed),
        Command::Chat(a) => llm::chat(&a),
        Command::Serve(a) => llm::serve(&a),
        Command::Bench(a) => bench::run(&a),
        Command::Synth(a) => data::synth(&a, seed),
    }
}

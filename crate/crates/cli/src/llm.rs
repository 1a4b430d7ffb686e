use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, ValueEnum};
use lumen_core::classify::Checkpoint;
use lumen_core::pipeline::TextClassifier;
use lumen_core::prompts::{load_exemplar_bank, DialogueOptions, DialogueState, PlanConfig};
use lumen_core::textprep::load_embeddings;
use lumen_service::{DiagnoseRequest, Engine, Engines, ServiceConfig};

use crate::{emit_json, BackendArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Classifier,
    Llm,
    Both,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Classifier => Engine::Classifier,
            EngineArg::Llm => Engine::Llm,
            EngineArg::Both => Engine::Both,
        }
    }
}

fn engines(
    backend: &BackendArgs,
    checkpoint: Option<&PathBuf>,
    embeddings: Option<&PathBuf>,
) -> anyhow::Result<Engines> {
    let cfg = backend.config()?;
    let llm = cfg.build().context("building LLM backend")?;
    let classifier = match checkpoint {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            let table = match embeddings {
                Some(e) => Some(Arc::new(load_embeddings(e)?)),
                None => None,
            };
            Some(TextClassifier::from_checkpoint(&ck, table)?)
        }
        None => None,
    };
    let mut engines = Engines::new(classifier, llm);
    engines.dialogue = DialogueOptions { model_id: cfg.model_id.clone(), ..DialogueOptions::default() };
    engines.planner = PlanConfig { model_id: cfg.model_id, ..PlanConfig::default() };
    Ok(engines)
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub text: String,
    /// Few-shot exemplars in the prompt.
    #[arg(long, default_value_t = 3)]
    pub shots: usize,
    #[arg(long, value_enum, default_value_t = EngineArg::Llm)]
    pub engine: EngineArg,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Exemplar bank JSONL replacing the bundled one.
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Skip the LIME explanation of the classifier.
    #[arg(long)]
    pub no_explain: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

pub fn diagnose(a: &DiagnoseArgs, seed: u64) -> anyhow::Result<()> {
    let mut engines = engines(&a.backend, a.checkpoint.as_ref(), a.embeddings.as_ref())?;
    if let Some(p) = &a.exemplars {
        engines.exemplars = Arc::new(load_exemplar_bank(p)?);
    }
    engines.lime.seed = seed;
    let req = DiagnoseRequest { text: a.text.clone(), shots: a.shots, engine: a.engine.into(), explain: !a.no_explain };
    let result = engines.diagnose(&req)?;
    emit_json(&result, None)
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
}

/// Reads one message per line from stdin until EOF.
pub fn chat(a: &ChatArgs) -> anyhow::Result<()> {
    let engines = engines(&a.backend, None, None)?;
    let mut state = DialogueState::default();
    let mut has_plan = false;
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let (outcome, plan) = engines.chat_step(&state, !has_plan, text)?;
        writeln!(out, "[{}] {}", serde_json::to_value(outcome.state.stage)?.as_str().unwrap_or(""), outcome.reply)?;
        if let Some(plan) = plan {
            has_plan = true;
            writeln!(out, "{}", serde_json::to_string_pretty(&plan)?)?;
        }
        state = outcome.state;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub journal_dir: Option<PathBuf>,
}

pub fn serve(a: &ServeArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(port) = a.port {
        cfg.port = port;
    }
    if let Some(dir) = &a.journal_dir {
        cfg.journal_dir = dir.clone();
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(lumen_service::serve(cfg))?;
    Ok(())
}

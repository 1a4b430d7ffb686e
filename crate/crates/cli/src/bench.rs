//! Few-shot F1 and response-similarity sweeps over an LLM backend.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use lumen_core::corpus::{Label, Partition, Post};
use lumen_core::llmclient::LlmBackend;
use lumen_core::metrics::{metric_tokens, prf_report, response_similarity, rouge_l, rouge_n, ReportRow};
use lumen_core::prompts::{
    build_diagnose_prompt, default_exemplar_bank, load_exemplar_bank, next_turn, parse_diagnosis, DialogueOptions,
    DialogueState, Exemplar,
};
use lumen_core::textprep::{load_embeddings, EmbeddingTable};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{labeled, load_dataset};
use crate::{emit_json, BackendArgs, PartitionArg};

pub const SHOTS: [usize; 4] = [1, 2, 3, 4];
pub const FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const DIAGNOSE_MAX_TOKENS: u32 = 256;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    /// Replies that could not be parsed, per model id and axis value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unparsed: BTreeMap<String, usize>,
}

impl BenchReport {
    pub fn write_csv(&self, w: impl std::io::Write) -> anyhow::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One fixture item for the response-similarity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseItem {
    pub id: String,
    pub text: String,
    pub reference: String,
}

pub fn load_response_items(path: &Path) -> anyhow::Result<Vec<ResponseItem>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// F1 of few-shot diagnosis at each k in [`SHOTS`]. Unparseable replies are
/// scored as not depressed and counted in `unparsed`.
pub fn shots_sweep(
    posts: &[Post],
    bank: &[Exemplar],
    models: &[String],
    llm: &dyn LlmBackend,
    jobs: usize,
) -> anyhow::Result<BenchReport> {
    if posts.is_empty() {
        bail!("no labeled posts to evaluate");
    }
    let gold: Vec<Label> =
        posts.iter().map(|p| p.label.context("unlabeled post in evaluation set")).collect::<Result<_, _>>()?;
    let pool = pool(jobs)?;
    let mut report = BenchReport::default();
    for model in models {
        for k in SHOTS {
            let preds: Vec<Option<Label>> = pool.install(|| {
                posts
                    .par_iter()
                    .map(|p| -> anyhow::Result<Option<Label>> {
                        let req = build_diagnose_prompt(&p.text, bank, k)?.to_request(model, 0.0, DIAGNOSE_MAX_TOKENS);
                        let reply = llm.complete(&req)?;
                        Ok(parse_diagnosis(&reply.content).ok().map(|d| d.label.to_label()))
                    })
                    .collect::<anyhow::Result<Vec<_>>>()
            })?;
            let missed = preds.iter().filter(|p| p.is_none()).count();
            if missed > 0 {
                report.unparsed.insert(format!("{model}/k_shots={k}"), missed);
            }
            let labels: Vec<Label> = preds.into_iter().map(|p| p.unwrap_or(Label::NotDepressed)).collect();
            let r = prf_report(&labels, &gold)?;
            report.rows.push(ReportRow {
                model_id: model.clone(),
                axis: "k_shots".into(),
                axis_value: k.to_string(),
                metric: "f1".into(),
                value: r.f1,
            });
        }
    }
    Ok(report)
}

/// Number of leading items scored at `fraction` of `n`, at least one.
pub fn prefix_len(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n)
}

/// Mean cosine and ROUGE F1 of first-turn replies against references, over
/// the leading 25/50/75/100% of `items`.
pub fn fraction_sweep(
    items: &[ResponseItem],
    table: &EmbeddingTable,
    models: &[String],
    llm: &dyn LlmBackend,
    jobs: usize,
) -> anyhow::Result<BenchReport> {
    if items.is_empty() {
        bail!("no response items to evaluate");
    }
    let pool = pool(jobs)?;
    let mut report = BenchReport::default();
    for model in models {
        let opts = DialogueOptions { model_id: model.clone(), ..DialogueOptions::default() };
        let scores: Vec<[f64; 4]> = pool.install(|| {
            items
                .par_iter()
                .map(|item| -> anyhow::Result<[f64; 4]> {
                    let out = next_turn(&DialogueState::default(), &item.text, llm, &opts)?;
                    let (cand, refs) = (metric_tokens(&out.reply), metric_tokens(&item.reference));
                    Ok([
                        response_similarity(&out.reply, &item.reference, table),
                        rouge_n(&cand, &refs, 1).f1,
                        rouge_n(&cand, &refs, 2).f1,
                        rouge_l(&cand, &refs).f1,
                    ])
                })
                .collect::<anyhow::Result<Vec<_>>>()
        })?;
        for f in FRACTIONS {
            let n = prefix_len(items.len(), f);
            for (m, metric) in ["cosine", "rouge1", "rouge2", "rougeL"].iter().enumerate() {
                let mean = scores[..n].iter().map(|s| s[m]).sum::<f64>() / n as f64;
                report.rows.push(ReportRow {
                    model_id: model.clone(),
                    axis: "test_fraction".into(),
                    axis_value: f.to_string(),
                    metric: metric.to_string(),
                    value: mean,
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Shots,
    Fraction,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub sweep: Sweep,
    /// Corpus JSONL for `shots`, response items JSONL for `fraction`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
    pub partition: PartitionArg,
    /// Comma-separated model ids sent to the backend.
    #[arg(long, default_value = "gpt-4")]
    pub models: String,
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Word embeddings for the cosine metric (fraction sweep).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

pub fn run(a: &BenchArgs) -> anyhow::Result<()> {
    if a.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let models: Vec<String> = a.models.split(',').map(str::trim).filter(|m| !m.is_empty()).map(String::from).collect();
    if models.is_empty() {
        bail!("--models is empty");
    }
    let llm = a.backend.config()?.build().context("building LLM backend")?;
    let report = match a.sweep {
        Sweep::Shots => {
            let ds = load_dataset(&a.input, a.split.as_deref())?;
            let posts = labeled(&ds, Some(Partition::from(a.partition)));
            let bank = match &a.exemplars {
                Some(p) => load_exemplar_bank(p)?,
                None => default_exemplar_bank(),
            };
            shots_sweep(&posts, &bank, &models, llm.as_ref(), a.jobs)?
        }
        Sweep::Fraction => {
            let path = a.embeddings.as_ref().context("--embeddings is required for --sweep fraction")?;
            let table = load_embeddings(path).with_context(|| format!("loading {}", path.display()))?;
            let items = load_response_items(&a.input)?;
            fraction_sweep(&items, &table, &models, llm.as_ref(), a.jobs)?
        }
    };
    match &a.out_csv {
        Some(p) => report.write_csv(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?,
        None if a.out_json.is_none() => report.write_csv(std::io::stdout().lock())?,
        None => {}
    }
    if let Some(p) = &a.out_json {
        emit_json(&report, Some(p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_lengths() {
        assert_eq!(FRACTIONS.map(|f| prefix_len(8, f)), [2, 4, 6, 8]);
        assert_eq!(prefix_len(1, 0.25), 1);
        assert_eq!(prefix_len(10, 0.25), 3);
    }
}

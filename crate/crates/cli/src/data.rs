use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use lumen_core::corpus::synthetic::{clustered_embedding_table, generate, SyntheticSpec};
use lumen_core::corpus::{
    load_jsonl, load_split_manifest, pseudo_label, stratified_split, Dataset, Label, Partition, Post,
    PseudoLabelConfig, SplitSpec,
};
use lumen_core::pipeline::PipelineTeacher;
use serde_json::json;

use crate::emit_json;
use crate::model::ModelArgs;

pub(crate) fn load_dataset(input: &Path, split: Option<&Path>) -> anyhow::Result<Dataset> {
    let ds = load_jsonl(input).with_context(|| format!("loading {}", input.display()))?;
    match split {
        Some(s) => {
            let manifest = load_split_manifest(s).with_context(|| format!("loading {}", s.display()))?;
            Ok(ds.with_split(manifest)?)
        }
        None => Ok(ds),
    }
}

/// Labeled posts of `partition`, or every labeled post when unsplit.
pub(crate) fn labeled(ds: &Dataset, partition: Option<Partition>) -> Vec<Post> {
    let posts: Vec<&Post> = match (partition, &ds.split) {
        (Some(p), Some(_)) => ds.partition(p),
        _ => ds.posts.iter().collect(),
    };
    posts.into_iter().filter(|p| p.label.is_some()).cloned().collect()
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Re-serialised, validated copy of the corpus.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn ingest(a: &IngestArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.input, None)?;
    if let Some(out) = &a.out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
        ds.write_jsonl(&mut f)?;
    }
    let mut by_source: BTreeMap<String, usize> = BTreeMap::new();
    for p in &ds.posts {
        *by_source.entry(serde_json::to_value(p.source)?.as_str().unwrap_or_default().to_string()).or_default() += 1;
    }
    let depressed = ds.posts.iter().filter(|p| p.label == Some(Label::Depressed)).count();
    emit_json(
        &json!({
            "posts": ds.len(),
            "labeled": ds.labeled_count(),
            "depressed": depressed,
            "not_depressed": ds.labeled_count() - depressed,
            "by_source": by_source,
        }),
        None,
    )
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    pub train: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    /// Manifest of `{id, partition}` rows.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn split(a: &SplitArgs, seed: u64) -> anyhow::Result<()> {
    let ds = load_dataset(&a.input, None)?;
    let spec = SplitSpec::new(a.train, a.val, a.test, seed)?;
    let split = stratified_split(&ds, &spec)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    split.write_split_manifest(&mut f)?;
    let count = |p| split.partition(p).len();
    emit_json(
        &json!({
            "train": count(Partition::Train),
            "val": count(Partition::Val),
            "test": count(Partition::Test),
        }),
        None,
    )
}

#[derive(Debug, Args)]
pub struct PseudolabelArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Simulate: keep this stratified fraction of labels as the seed set and
    /// hide the rest. Without it, labeled posts are the seed and unlabeled
    /// posts the pool.
    #[arg(long)]
    pub seed_fraction: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    /// Admit the same number of posts per predicted class each round.
    #[arg(long)]
    pub balanced: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Seed plus admitted posts as JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Stratified seed/pool partition: the first `round(n·fraction)` posts of
/// each class (at least one) under a seeded shuffle become the seed.
pub fn simulate_seed_split(posts: &[Post], fraction: f64, seed: u64) -> anyhow::Result<(Vec<Post>, Vec<Post>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        bail!("seed fraction {fraction} not in (0, 1)");
    }
    let spec = SplitSpec::new(fraction, (1.0 - fraction) / 2.0, (1.0 - fraction) / 2.0, seed)?;
    let ds = stratified_split(&Dataset::new(posts.to_vec())?, &spec)?;
    let seed_set: Vec<Post> = ds.partition(Partition::Train).into_iter().cloned().collect();
    let pool: Vec<Post> = ds
        .posts
        .iter()
        .filter(|p| ds.split.as_ref().and_then(|s| s.get(&p.id)) != Some(&Partition::Train))
        .cloned()
        .collect();
    Ok((seed_set, pool))
}

pub fn pseudolabel(a: &PseudolabelArgs, seed: u64) -> anyhow::Result<()> {
    let ds = load_dataset(&a.input, None)?;
    let cfg = PseudoLabelConfig::new(a.threshold, a.rounds)?.balanced(a.balanced);
    let (mut pipeline, embeddings) = a.model.pipeline(seed)?;
    pipeline.train.seed = seed;
    let (seed_set, pool, truth) = match a.seed_fraction {
        Some(f) => {
            let labeled: Vec<Post> = ds.posts.iter().filter(|p| p.label.is_some()).cloned().collect();
            let (s, pool) = simulate_seed_split(&labeled, f, seed)?;
            let truth: BTreeMap<String, Label> = pool.iter().map(|p| (p.id.clone(), p.label.unwrap())).collect();
            let hidden = pool.into_iter().map(|p| Post { label: None, ..p }).collect();
            (s, hidden, Some(truth))
        }
        None => {
            let (s, pool): (Vec<Post>, Vec<Post>) = ds.posts.iter().cloned().partition(|p| p.label.is_some());
            (s, pool, None)
        }
    };
    let teacher = PipelineTeacher { cfg: pipeline, embeddings };
    let outcome = pseudo_label(&teacher, &seed_set, &pool, &cfg)?;
    let agreement = truth.as_ref().map(|t| {
        let agree = outcome.admitted.iter().filter(|p| t.get(&p.id) == p.label.as_ref()).count();
        if outcome.admitted.is_empty() {
            1.0
        } else {
            agree as f64 / outcome.admitted.len() as f64
        }
    });
    if let Some(out) = &a.out {
        let all: Vec<Post> = seed_set.iter().cloned().chain(outcome.admitted.iter().cloned()).collect();
        let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
        Dataset::new(all)?.write_jsonl(&mut f)?;
    }
    emit_json(
        &json!({
            "seed": seed_set.len(),
            "pool": pool.len(),
            "admitted": outcome.admitted.len(),
            "trainings": outcome.trainings,
            "rounds": outcome.rounds,
            "agreement": agreement,
        }),
        None,
    )
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an embedding table covering the generator vocabulary.
    #[arg(long)]
    pub embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Shift of each keyword pool along a shared direction.
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
}

pub fn synth(a: &SynthArgs, seed: u64) -> anyhow::Result<()> {
    let posts = generate(&SyntheticSpec { docs: a.docs, seed, ..SyntheticSpec::default() });
    let mut f = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    Dataset::new(posts)?.write_jsonl(&mut f)?;
    if let Some(p) = &a.embeddings_out {
        std::fs::write(p, clustered_embedding_table(a.dim, seed, a.separation).to_text())?;
    }
    Ok(())
}

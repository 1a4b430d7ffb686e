use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use lumen_core::classify::{grid_search_cv, Checkpoint, CvMetric, TrainConfig};
use lumen_core::corpus::Partition;
use lumen_core::explain::LimeConfig;
use lumen_core::metrics::prf_report;
use lumen_core::pipeline::{ModelSpec, PipelineConfig, PipelineCv, TextClassifier, DEFAULT_MAX_LEN, DEFAULT_VOCAB_CAP};
use lumen_core::textprep::{load_embeddings, EmbeddingTable};
use serde_json::json;

use crate::data::{labeled, load_dataset};
use crate::{emit_json, PartitionArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Logreg,
    Svm,
    Cnn,
}

/// Model family, hyper-parameters and optimiser schedule.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Family::Logreg)]
    pub model: Family,
    /// Inverse regularisation strength.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// RBF width for the SVM.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Random Fourier feature count for the SVM.
    #[arg(long, default_value_t = 1024)]
    pub features: usize,
    /// Sequence length for the CNN.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Embedding table (required for the CNN).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VOCAB_CAP)]
    pub vocab_cap: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl ModelArgs {
    pub fn spec(&self) -> ModelSpec {
        match self.model {
            Family::Logreg => ModelSpec::LogReg { c: self.c },
            Family::Svm => ModelSpec::Svm { c: self.c, gamma: self.gamma, features: self.features },
            Family::Cnn => ModelSpec::Cnn { max_len: self.max_len },
        }
    }

    pub fn embeddings(&self) -> anyhow::Result<Option<Arc<EmbeddingTable>>> {
        match &self.embeddings {
            Some(p) => {
                Ok(Some(Arc::new(load_embeddings(p).with_context(|| format!("loading embeddings {}", p.display()))?)))
            }
            None if self.model == Family::Cnn => bail!("--embeddings is required for --model cnn"),
            None => Ok(None),
        }
    }

    pub fn pipeline(&self, seed: u64) -> anyhow::Result<(PipelineConfig, Option<Arc<EmbeddingTable>>)> {
        let mut cfg = PipelineConfig::new(self.spec());
        cfg.vocab_cap = self.vocab_cap;
        let t: &mut TrainConfig = &mut cfg.train;
        t.seed = seed;
        if let Some(e) = self.epochs {
            t.epochs = e;
        }
        if let Some(lr) = self.lr {
            t.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        Ok((cfg, self.embeddings()?))
    }
}

fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value {v:?}"))).collect()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Split manifest; training uses its train partition.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated C grid searched by k-fold cross-validation.
    #[arg(long)]
    pub grid_c: Option<String>,
    /// Comma-separated gamma grid (SVM).
    #[arg(long)]
    pub grid_gamma: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(a: &TrainArgs, seed: u64) -> anyhow::Result<()> {
    let ds = load_dataset(&a.input, a.split.as_deref())?;
    let posts = labeled(&ds, Some(Partition::Train));
    let (mut cfg, embeddings) = a.model.pipeline(seed)?;
    let mut cv_report = None;
    if a.grid_c.is_some() || a.grid_gamma.is_some() {
        let cs = match &a.grid_c {
            Some(g) => parse_list(g)?,
            None => vec![a.model.c],
        };
        let gammas = match &a.grid_gamma {
            Some(g) => parse_list(g)?,
            None => vec![a.model.gamma],
        };
        let grid: Vec<ModelSpec> = match a.model.model {
            Family::Logreg => cs.iter().map(|&c| ModelSpec::LogReg { c }).collect(),
            Family::Svm => cs
                .iter()
                .flat_map(|&c| gammas.iter().map(move |&gamma| (c, gamma)))
                .map(|(c, gamma)| ModelSpec::Svm { c, gamma, features: a.model.features })
                .collect(),
            Family::Cnn => bail!("grid search supports logreg and svm"),
        };
        let docs: Vec<_> = posts.iter().map(|p| lumen_core::textprep::preprocess(&p.text, cfg.preprocess)).collect();
        let ys: Vec<_> = posts.iter().map(|p| p.label.expect("labeled")).collect();
        let trainer = PipelineCv { base: cfg, embeddings: embeddings.clone() };
        let result = grid_search_cv(&trainer, &grid, a.folds, &docs, &ys, CvMetric::F1, seed)?;
        cfg.model = result.best;
        cv_report = Some(json!({
            "folds": a.folds,
            "grid": grid,
            "scores": result.scores,
            "best": result.best,
            "best_score": result.best_score,
        }));
    }
    let clf = TextClassifier::fit(&posts, &cfg, embeddings)?;
    clf.to_checkpoint().save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    emit_json(
        &json!({ "family": cfg.model.family(), "train_docs": posts.len(), "model": cfg.model, "cv": cv_report }),
        None,
    )
}

fn load_classifier(checkpoint: &PathBuf, embeddings: Option<&PathBuf>) -> anyhow::Result<TextClassifier> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let table = match embeddings {
        Some(p) => Some(Arc::new(load_embeddings(p)?)),
        None => None,
    };
    Ok(TextClassifier::from_checkpoint(&ck, table)?)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
    pub partition: PartitionArg,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let clf = load_classifier(&a.checkpoint, a.embeddings.as_ref())?;
    let ds = load_dataset(&a.input, a.split.as_deref())?;
    let posts = labeled(&ds, Some(a.partition.into()));
    if posts.is_empty() {
        bail!("no labeled posts to evaluate");
    }
    let preds = posts.iter().map(|p| clf.predict_text(&p.text).map(|x| x.label)).collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<_> = posts.iter().map(|p| p.label.expect("labeled")).collect();
    let report = prf_report(&preds, &truth)?;
    emit_json(&report, a.out.as_deref())
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["text", "id"])))]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<String>,
    /// Post id looked up in --input.
    #[arg(long, requires = "input")]
    pub id: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, default_value_t = 25.0)]
    pub kernel_width: f64,
}

pub fn explain(a: &ExplainArgs, seed: u64) -> anyhow::Result<()> {
    let clf = load_classifier(&a.checkpoint, a.embeddings.as_ref())?;
    let text = match (&a.text, &a.id, &a.input) {
        (Some(t), _, _) => t.clone(),
        (None, Some(id), Some(input)) => {
            let ds = load_dataset(input, None)?;
            ds.get(id).with_context(|| format!("no post with id {id:?}"))?.text.clone()
        }
        _ => unreachable!("clap enforces the target group"),
    };
    let doc = clf.tokenize(&text);
    let cfg =
        LimeConfig { samples: a.samples, top_k: a.top_k, kernel_width: a.kernel_width, seed, ..LimeConfig::default() };
    let explanation = lumen_core::explain::explain(|d| clf.predict_doc(d).map(|p| p.p1), &doc, &cfg)?;
    emit_json(&explanation, None)
}

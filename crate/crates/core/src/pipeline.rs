//! End-to-end text classifier: preprocessing, feature extraction and a
//! trained model behind one `text -> Prediction` call.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    train_cnn, train_logreg, train_svm_rff, Checkpoint, CheckpointError, ClassifyError, CvTrainer, Features, Model,
    Prediction, TrainConfig,
};
use crate::corpus::{Label, Post, Teacher};
use crate::linalg::Matrix;
use crate::textprep::{
    embed_sequence, fit_tfidf, preprocess, tfidf_transform, EmbeddingTable, PreprocessConfig, TextprepError,
    TfidfVector, TokenDoc, Vocabulary,
};

pub const DEFAULT_VOCAB_CAP: usize = 5000;
pub const DEFAULT_MAX_LEN: usize = 400;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Textprep(#[from] TextprepError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("post {0:?} has no label")]
    Unlabeled(String),
    #[error("the cnn family needs an embedding table")]
    MissingEmbeddings,
}

/// Model family and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    #[serde(rename = "logreg")]
    LogReg {
        c: f64,
    },
    Svm {
        c: f64,
        gamma: f64,
        features: usize,
    },
    Cnn {
        max_len: usize,
    },
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::LogReg { .. } => "logreg",
            ModelSpec::Svm { .. } => "svm",
            ModelSpec::Cnn { .. } => "cnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub vocab_cap: usize,
    pub preprocess: PreprocessConfig,
}

impl PipelineConfig {
    /// Family defaults: the linear schedule for TF-IDF models, the generic
    /// one for the CNN.
    pub fn new(model: ModelSpec) -> Self {
        let train = match model {
            ModelSpec::Cnn { .. } => TrainConfig::default(),
            _ => TrainConfig::linear(),
        };
        Self { model, train, vocab_cap: DEFAULT_VOCAB_CAP, preprocess: PreprocessConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub enum FeatureMap {
    Tfidf(Vocabulary),
    Sequence { table: Arc<EmbeddingTable>, max_len: usize },
}

enum OwnedFeatures {
    Tfidf(TfidfVector),
    Sequence(Matrix),
}

impl OwnedFeatures {
    fn view(&self) -> Features<'_> {
        match self {
            OwnedFeatures::Tfidf(v) => Features::Tfidf(v),
            OwnedFeatures::Sequence(m) => Features::Sequence(m),
        }
    }
}

impl FeatureMap {
    fn extract(&self, doc: &TokenDoc) -> OwnedFeatures {
        match self {
            FeatureMap::Tfidf(v) => OwnedFeatures::Tfidf(tfidf_transform(v, doc)),
            FeatureMap::Sequence { table, max_len } => OwnedFeatures::Sequence(embed_sequence(doc, table, *max_len)),
        }
    }
}

/// Preprocessing + features + model.
#[derive(Debug, Clone)]
pub struct TextClassifier {
    pub preprocess: PreprocessConfig,
    pub features: FeatureMap,
    pub model: Model,
}

fn labels_of(posts: &[Post]) -> Result<Vec<Label>, PipelineError> {
    posts.iter().map(|p| p.label.ok_or_else(|| PipelineError::Unlabeled(p.id.clone()))).collect()
}

impl TextClassifier {
    /// Trains on labeled posts.
    pub fn fit(
        posts: &[Post],
        cfg: &PipelineConfig,
        embeddings: Option<Arc<EmbeddingTable>>,
    ) -> Result<Self, PipelineError> {
        let ys = labels_of(posts)?;
        let docs: Vec<TokenDoc> = posts.iter().map(|p| preprocess(&p.text, cfg.preprocess)).collect();
        let refs: Vec<&TokenDoc> = docs.iter().collect();
        Self::fit_docs(&refs, &ys, cfg, embeddings)
    }

    /// Trains on already-preprocessed documents.
    pub fn fit_docs(
        docs: &[&TokenDoc],
        ys: &[Label],
        cfg: &PipelineConfig,
        embeddings: Option<Arc<EmbeddingTable>>,
    ) -> Result<Self, PipelineError> {
        let (features, model) = match cfg.model {
            ModelSpec::LogReg { .. } | ModelSpec::Svm { .. } => {
                let owned: Vec<TokenDoc> = docs.iter().map(|d| (*d).clone()).collect();
                let vocab = fit_tfidf(&owned, cfg.vocab_cap)?;
                let xs: Vec<TfidfVector> = docs.iter().map(|d| tfidf_transform(&vocab, d)).collect();
                let dim = Some(vocab.len());
                let model = match cfg.model {
                    ModelSpec::LogReg { c } => Model::LogReg(train_logreg(&xs, ys, dim, &cfg.train, c)?),
                    ModelSpec::Svm { c, gamma, features } => {
                        Model::Svm(train_svm_rff(&xs, ys, dim, &cfg.train, c, gamma, features)?)
                    }
                    ModelSpec::Cnn { .. } => unreachable!(),
                };
                (FeatureMap::Tfidf(vocab), model)
            }
            ModelSpec::Cnn { max_len } => {
                let table = embeddings.ok_or(PipelineError::MissingEmbeddings)?;
                let xs: Vec<Matrix> = docs.iter().map(|d| embed_sequence(d, &table, max_len)).collect();
                let model = Model::Cnn(train_cnn(&xs, ys, &cfg.train)?);
                (FeatureMap::Sequence { table, max_len }, model)
            }
        };
        Ok(Self { preprocess: cfg.preprocess, features, model })
    }

    pub fn tokenize(&self, text: &str) -> TokenDoc {
        preprocess(text, self.preprocess)
    }

    pub fn predict_doc(&self, doc: &TokenDoc) -> Result<Prediction, ClassifyError> {
        self.model.predict(self.features.extract(doc).view())
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction, ClassifyError> {
        self.predict_doc(&self.tokenize(text))
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match &self.features {
            FeatureMap::Tfidf(v) => Some(v),
            FeatureMap::Sequence { .. } => None,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let table = match &self.features {
            FeatureMap::Sequence { table, .. } => Some(table.as_ref()),
            FeatureMap::Tfidf(_) => None,
        };
        Checkpoint::from_model(&self.model, self.vocabulary(), table, self.preprocess)
    }

    /// Rebuilds a classifier; CNN checkpoints need the embedding table they
    /// were trained with.
    pub fn from_checkpoint(ck: &Checkpoint, embeddings: Option<Arc<EmbeddingTable>>) -> Result<Self, PipelineError> {
        let model = ck.to_model()?;
        let features = match &model {
            Model::Cnn(m) => {
                let table = embeddings.ok_or(PipelineError::MissingEmbeddings)?;
                ck.verify_embeddings(&table)?;
                FeatureMap::Sequence { table, max_len: m.max_len() }
            }
            _ => FeatureMap::Tfidf(ck.vocabulary.clone().ok_or(CheckpointError::MissingArtifact("vocabulary"))?),
        };
        Ok(Self { preprocess: ck.preprocess, features, model })
    }
}

/// Pseudo-labeling teacher that refits a full [`TextClassifier`].
#[derive(Debug, Clone)]
pub struct PipelineTeacher {
    pub cfg: PipelineConfig,
    pub embeddings: Option<Arc<EmbeddingTable>>,
}

impl Teacher for PipelineTeacher {
    type Model = TextClassifier;
    type Error = PipelineError;

    fn fit(&self, labeled: &[Post]) -> Result<TextClassifier, PipelineError> {
        TextClassifier::fit(labeled, &self.cfg, self.embeddings.clone())
    }

    fn p1(&self, model: &TextClassifier, post: &Post) -> f64 {
        model.predict_text(&post.text).map_or(0.5, |p| p.p1)
    }
}

/// Cross-validation trainer over preprocessed documents: each fold refits
/// the vocabulary and the model at a [`ModelSpec`] grid point.
#[derive(Debug, Clone)]
pub struct PipelineCv {
    pub base: PipelineConfig,
    pub embeddings: Option<Arc<EmbeddingTable>>,
}

impl CvTrainer<TokenDoc> for PipelineCv {
    type Point = ModelSpec;
    type Model = TextClassifier;

    fn fit(&self, point: &ModelSpec, xs: &[&TokenDoc], ys: &[Label]) -> Result<TextClassifier, ClassifyError> {
        let cfg = PipelineConfig { model: *point, ..self.base };
        TextClassifier::fit_docs(xs, ys, &cfg, self.embeddings.clone()).map_err(|e| match e {
            PipelineError::Classify(c) => c,
            other => ClassifyError::InvalidConfig(other.to_string()),
        })
    }

    fn predict(&self, model: &TextClassifier, x: &TokenDoc) -> Result<Prediction, ClassifyError> {
        model.predict_doc(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{grid_search_cv, CvMetric};
    use crate::corpus::synthetic::{embedding_table, generate, SyntheticSpec};

    fn corpus(n: usize) -> Vec<Post> {
        generate(&SyntheticSpec { docs: n, ..Default::default() })
    }

    #[test]
    fn logreg_pipeline_separates_synthetic_docs() {
        let posts = corpus(60);
        let clf = TextClassifier::fit(&posts, &PipelineConfig::new(ModelSpec::LogReg { c: 10.0 }), None).unwrap();
        let correct = posts.iter().filter(|p| clf.predict_text(&p.text).unwrap().label == p.label.unwrap()).count();
        assert_eq!(correct, posts.len());
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let posts = corpus(40);
        let table = Arc::new(embedding_table(4, 1));
        let specs = [
            ModelSpec::LogReg { c: 1.0 },
            ModelSpec::Svm { c: 1.0, gamma: 1.0, features: 32 },
            ModelSpec::Cnn { max_len: 24 },
        ];
        for spec in specs {
            let mut cfg = PipelineConfig::new(spec);
            cfg.train.epochs = 2;
            let clf = TextClassifier::fit(&posts, &cfg, Some(table.clone())).unwrap();
            let ck = Checkpoint::from_json(&clf.to_checkpoint().to_json().unwrap()).unwrap();
            let back = TextClassifier::from_checkpoint(&ck, Some(table.clone())).unwrap();
            for p in &posts[..5] {
                assert_eq!(back.predict_text(&p.text).unwrap(), clf.predict_text(&p.text).unwrap());
            }
        }
    }

    #[test]
    fn cnn_requires_embeddings() {
        let posts = corpus(10);
        let err = TextClassifier::fit(&posts, &PipelineConfig::new(ModelSpec::Cnn { max_len: 24 }), None);
        assert!(matches!(err, Err(PipelineError::MissingEmbeddings)));
    }

    #[test]
    fn unlabeled_posts_are_rejected() {
        let mut posts = corpus(4);
        posts[1].label = None;
        let err = TextClassifier::fit(&posts, &PipelineConfig::new(ModelSpec::LogReg { c: 1.0 }), None);
        assert!(matches!(err, Err(PipelineError::Unlabeled(id)) if id == "syn-0001"));
    }

    #[test]
    fn grid_over_model_specs() {
        let posts = corpus(40);
        let docs: Vec<TokenDoc> = posts.iter().map(|p| preprocess(&p.text, PreprocessConfig::default())).collect();
        let ys: Vec<Label> = posts.iter().map(|p| p.label.unwrap()).collect();
        let cv = PipelineCv { base: PipelineConfig::new(ModelSpec::LogReg { c: 1.0 }), embeddings: None };
        let grid = [ModelSpec::LogReg { c: 1.0 }, ModelSpec::LogReg { c: 1.0 }];
        let r = grid_search_cv(&cv, &grid, 4, &docs, &ys, CvMetric::F1, 0).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.scores[0], r.scores[1]);
    }

    #[test]
    fn spec_serialises_with_family_tag() {
        let s = serde_json::to_string(&ModelSpec::LogReg { c: 2.0 }).unwrap();
        assert_eq!(s, r#"{"family":"logreg","c":2.0}"#);
    }
}

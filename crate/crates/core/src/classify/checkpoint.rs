//! JSON checkpoint container.
//!
//! ```json
//! {
//!   "format": "lumen-checkpoint",
//!   "version": 1,
//!   "family": "logreg" | "svm" | "cnn",
//!   "hyperparams": { "c": 1.0, ... },
//!   "shapes": { "<tensor>": [dims...] },
//!   "params": { "<tensor>": [row-major values...] },
//!   "fingerprints": { "vocabulary": "<sha256>", "embeddings": "<sha256>" },
//!   "vocabulary": { ... } | null,
//!   "preprocess": { "stopwords": true, "stemming": true },
//!   "max_len": 400 | null
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{CnnModel, LogRegModel, Model, RffMap, RffSvmModel};
use crate::linalg::Matrix;
use crate::textprep::{EmbeddingTable, PreprocessConfig, Vocabulary};

pub const FORMAT: &str = "lumen-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint format {format:?} version {version}")]
    UnsupportedFormat { format: String, version: u32 },
    #[error("unknown model family {0:?}")]
    UnknownFamily(String),
    #[error("missing tensor or hyperparameter {0:?}")]
    Missing(String),
    #[error("tensor {name:?} has {found} values, shape requires {expected}")]
    Shape { name: String, expected: usize, found: usize },
    #[error("{kind} fingerprint mismatch")]
    FingerprintMismatch { kind: &'static str },
    #[error("checkpoint needs a {0}")]
    MissingArtifact(&'static str),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub family: String,
    pub hyperparams: BTreeMap<String, Value>,
    pub shapes: BTreeMap<String, Vec<usize>>,
    pub params: BTreeMap<String, Vec<f64>>,
    pub fingerprints: BTreeMap<String, String>,
    pub vocabulary: Option<Vocabulary>,
    pub preprocess: PreprocessConfig,
    pub max_len: Option<usize>,
}

impl Checkpoint {
    /// Packs a model with the artifacts it needs at inference: the
    /// vocabulary for TF-IDF models, the embedding fingerprint for the CNN.
    pub fn from_model(
        model: &Model,
        vocabulary: Option<&Vocabulary>,
        embeddings: Option<&EmbeddingTable>,
        preprocess: PreprocessConfig,
    ) -> Self {
        let mut ck = Self {
            format: FORMAT.into(),
            version: VERSION,
            family: model.family().into(),
            hyperparams: BTreeMap::new(),
            shapes: BTreeMap::new(),
            params: BTreeMap::new(),
            fingerprints: BTreeMap::new(),
            vocabulary: vocabulary.cloned(),
            preprocess,
            max_len: None,
        };
        if let Some(v) = vocabulary {
            ck.fingerprints.insert("vocabulary".into(), v.fingerprint());
        }
        if let Some(e) = embeddings {
            ck.fingerprints.insert("embeddings".into(), e.fingerprint());
        }
        match model {
            Model::LogReg(m) => {
                ck.hyperparams.insert("c".into(), json!(m.c));
                ck.put("weights", vec![m.dim()], m.weights.clone());
                ck.put("bias", vec![1], vec![m.bias]);
            }
            Model::Svm(m) => {
                ck.hyperparams.insert("c".into(), json!(m.c));
                ck.hyperparams.insert("gamma".into(), json!(m.map.gamma));
                ck.hyperparams.insert("features".into(), json!(m.features()));
                let (rows, cols) = m.map.projection.shape();
                ck.put("projection", vec![rows, cols], m.map.projection.as_slice().to_vec());
                ck.put("phases", vec![rows], m.map.phases.clone());
                ck.put("weights", vec![rows], m.weights.clone());
                ck.put("bias", vec![1], vec![m.bias]);
            }
            Model::Cnn(m) => {
                ck.hyperparams.insert("dropout".into(), json!(super::CNN_DROPOUT));
                ck.hyperparams.insert("dim".into(), json!(m.dim()));
                ck.max_len = Some(m.max_len());
                for (name, shape, range) in m.param_blocks() {
                    ck.put(name, shape, m.params()[range].to_vec());
                }
            }
        }
        ck
    }

    fn put(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) {
        self.shapes.insert(name.into(), shape);
        self.params.insert(name.into(), values);
    }

    fn tensor(&self, name: &str) -> Result<&[f64], CheckpointError> {
        let values = self.params.get(name).ok_or_else(|| CheckpointError::Missing(name.into()))?;
        let shape = self.shapes.get(name).ok_or_else(|| CheckpointError::Missing(name.into()))?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(CheckpointError::Shape { name: name.into(), expected, found: values.len() });
        }
        Ok(values)
    }

    fn shape(&self, name: &str) -> Result<&[usize], CheckpointError> {
        self.shapes.get(name).map(Vec::as_slice).ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    fn hyper(&self, name: &str) -> Result<f64, CheckpointError> {
        self.hyperparams.get(name).and_then(Value::as_f64).ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    fn check_len(name: &str, values: &[f64], expected: usize) -> Result<(), CheckpointError> {
        if values.len() != expected {
            return Err(CheckpointError::Shape { name: name.into(), expected, found: values.len() });
        }
        Ok(())
    }

    /// Reconstructs the model, validating format, shapes and the vocabulary
    /// fingerprint.
    pub fn to_model(&self) -> Result<Model, CheckpointError> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(CheckpointError::UnsupportedFormat { format: self.format.clone(), version: self.version });
        }
        if let (Some(v), Some(fp)) = (&self.vocabulary, self.fingerprints.get("vocabulary")) {
            if &v.fingerprint() != fp {
                return Err(CheckpointError::FingerprintMismatch { kind: "vocabulary" });
            }
        }
        match self.family.as_str() {
            "logreg" => {
                let weights = self.tensor("weights")?.to_vec();
                let bias = self.tensor("bias")?;
                Self::check_len("bias", bias, 1)?;
                Ok(Model::LogReg(LogRegModel { weights, bias: bias[0], c: self.hyper("c")? }))
            }
            "svm" => {
                let shape = self.shape("projection")?;
                let [rows, cols] = *shape else {
                    return Err(CheckpointError::Missing("projection".into()));
                };
                let projection = Matrix::from_vec(rows, cols, self.tensor("projection")?.to_vec());
                let phases = self.tensor("phases")?.to_vec();
                let weights = self.tensor("weights")?.to_vec();
                let bias = self.tensor("bias")?;
                Self::check_len("phases", &phases, rows)?;
                Self::check_len("weights", &weights, rows)?;
                Self::check_len("bias", bias, 1)?;
                Ok(Model::Svm(RffSvmModel {
                    map: RffMap { projection, phases, gamma: self.hyper("gamma")? },
                    weights,
                    bias: bias[0],
                    c: self.hyper("c")?,
                }))
            }
            "cnn" => {
                let dim = self.hyper("dim")? as usize;
                let max_len = self.max_len.ok_or(CheckpointError::Missing("max_len".into()))?;
                let blocks = CnnModel::new(dim, max_len, 0)
                    .map_err(|_| CheckpointError::Missing("cnn shape".into()))?
                    .param_blocks();
                let mut flat = Vec::with_capacity(blocks.last().map_or(0, |b| b.2.end));
                for (name, shape, _) in blocks {
                    let values = self.tensor(name)?;
                    if self.shape(name)? != shape.as_slice() {
                        return Err(CheckpointError::Shape {
                            name: name.into(),
                            expected: shape.iter().product(),
                            found: values.len(),
                        });
                    }
                    flat.extend_from_slice(values);
                }
                CnnModel::from_params(dim, max_len, flat)
                    .map(Model::Cnn)
                    .map_err(|_| CheckpointError::Missing("cnn parameters".into()))
            }
            other => Err(CheckpointError::UnknownFamily(other.into())),
        }
    }

    /// Errors when the checkpoint records an embedding fingerprint that does
    /// not match `table`.
    pub fn verify_embeddings(&self, table: &EmbeddingTable) -> Result<(), CheckpointError> {
        match self.fingerprints.get("embeddings") {
            Some(fp) if *fp != table.fingerprint() => Err(CheckpointError::FingerprintMismatch { kind: "embeddings" }),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String, CheckpointError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{train_svm_rff, TrainConfig};
    use crate::corpus::Label;
    use crate::textprep::{fit_tfidf, TokenDoc};

    #[test]
    fn logreg_round_trip_with_vocabulary() {
        let vocab = fit_tfidf(&[TokenDoc::from_tokens(["sad", "tire"])], 10).unwrap();
        let model = Model::LogReg(LogRegModel { weights: vec![0.5, -1.25], bias: 0.1, c: 4.0 });
        let ck = Checkpoint::from_model(&model, Some(&vocab), None, PreprocessConfig::default());
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn svm_and_cnn_round_trip_exactly() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let ys = vec![Label::NotDepressed, Label::NotDepressed, Label::Depressed, Label::Depressed];
        let cfg = TrainConfig { epochs: 2, batch_size: 4, ..Default::default() };
        let svm = Model::Svm(train_svm_rff(&xs, &ys, None, &cfg, 1.0, 0.7, 16).unwrap());
        let cnn = Model::Cnn(CnnModel::new(3, 21, 2).unwrap());
        for m in [svm, cnn] {
            let ck = Checkpoint::from_model(&m, None, None, PreprocessConfig::default());
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            assert_eq!(back.to_model().unwrap(), m);
        }
    }

    #[test]
    fn rejects_corruption() {
        let model = Model::LogReg(LogRegModel::zeros(2, 1.0));
        let mut ck = Checkpoint::from_model(&model, None, None, PreprocessConfig::default());
        ck.params.get_mut("weights").unwrap().push(1.0);
        assert!(matches!(ck.to_model(), Err(CheckpointError::Shape { .. })));

        let mut ck = Checkpoint::from_model(&model, None, None, PreprocessConfig::default());
        ck.family = "xgboost".into();
        assert!(matches!(ck.to_model(), Err(CheckpointError::UnknownFamily(_))));

        let vocab = fit_tfidf(&[TokenDoc::from_tokens(["a", "b"])], 10).unwrap();
        let mut ck = Checkpoint::from_model(&model, Some(&vocab), None, PreprocessConfig::default());
        ck.fingerprints.insert("vocabulary".into(), "00".into());
        assert!(matches!(ck.to_model(), Err(CheckpointError::FingerprintMismatch { kind: "vocabulary" })));
    }

    #[test]
    fn embedding_fingerprint_is_checked() {
        let mut table = EmbeddingTable::new(1);
        table.insert("a", vec![1.0]);
        let model = Model::Cnn(CnnModel::new(1, 21, 0).unwrap());
        let ck = Checkpoint::from_model(&model, None, Some(&table), PreprocessConfig::default());
        assert!(ck.verify_embeddings(&table).is_ok());
        table.insert("b", vec![2.0]);
        assert!(ck.verify_embeddings(&table).is_err());
    }
}

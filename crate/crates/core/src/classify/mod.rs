//! Trainable classifiers: L2 logistic regression, a random-Fourier-feature
//! approximation of the RBF-kernel SVM, and a two-layer 1-D CNN over word
//! embeddings. All training is Adam-based, single-threaded and seeded.

mod adam;
pub mod checkpoint;
mod cnn;
mod cv;
mod logreg;
mod rff;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::linalg::Matrix;
use crate::textprep::TfidfVector;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointError};
pub use cnn::{train_cnn, CnnGradients, CnnModel, CNN_DROPOUT};
pub use cv::{grid_search_cv, stratified_folds, CvMetric, CvTrainer, GridSearchResult};
pub use logreg::{train_logreg, train_logreg_line_search, LineSearchTrace, LogRegModel};
pub use rff::{train_svm_rff, RffMap, RffSvmModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input shape {found:?} does not match {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("sequence length {0} is too short for both convolutions (minimum 21)")]
    InputTooShort(usize),
    #[error("{samples} samples cannot fill {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("feature form does not match the {0} model")]
    WrongFeatureForm(&'static str),
}

/// Optimiser schedule shared by all three families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { seed: 0, epochs: 20, batch_size: 64, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl TrainConfig {
    /// Schedule used for the linear models over TF-IDF: the generic default
    /// takes too few steps on small corpora to reach confident probabilities.
    pub fn linear() -> Self {
        Self { epochs: 200, batch_size: 32, learning_rate: 0.05, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ClassifyError::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(ClassifyError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Probability of [`Label::Depressed`].
    pub p1: f64,
    pub label: Label,
}

impl Prediction {
    /// Two-score argmax; the class-1 score wins ties.
    pub fn from_p1(p1: f64) -> Self {
        Self { p1, label: Label::from_bool(p1 >= 1.0 - p1) }
    }
}

/// Input accepted by [`LogRegModel`] and [`RffSvmModel`]: sparse TF-IDF or
/// dense vectors.
pub trait FeatureVector {
    /// Whether every non-zero index is below `dim` (sparse) or the length
    /// equals `dim` (dense).
    fn fits_dim(&self, dim: usize) -> bool;
    /// Length for dense input, `max index + 1` for sparse.
    fn dim_hint(&self) -> usize;
    fn dot(&self, dense: &[f64]) -> f64;
    fn add_scaled_to(&self, scale: f64, out: &mut [f64]);
}

impl FeatureVector for TfidfVector {
    fn fits_dim(&self, dim: usize) -> bool {
        self.max_index().is_none_or(|i| i < dim)
    }

    fn dim_hint(&self) -> usize {
        self.max_index().map_or(0, |i| i + 1)
    }

    fn dot(&self, dense: &[f64]) -> f64 {
        self.dot_dense(dense)
    }

    fn add_scaled_to(&self, scale: f64, out: &mut [f64]) {
        for &(i, w) in &self.entries {
            out[i] += scale * w;
        }
    }
}

impl FeatureVector for Vec<f64> {
    fn fits_dim(&self, dim: usize) -> bool {
        self.len() == dim
    }

    fn dim_hint(&self) -> usize {
        self.len()
    }

    fn dot(&self, dense: &[f64]) -> f64 {
        crate::linalg::dot(self, dense)
    }

    fn add_scaled_to(&self, scale: f64, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self) {
            *o += scale * x;
        }
    }
}

/// A trained model of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    LogReg(LogRegModel),
    Svm(RffSvmModel),
    Cnn(CnnModel),
}

/// Feature form matching a [`Model`].
#[derive(Debug, Clone, Copy)]
pub enum Features<'a> {
    Tfidf(&'a TfidfVector),
    Sequence(&'a Matrix),
}

impl Model {
    pub fn family(&self) -> &'static str {
        match self {
            Model::LogReg(_) => "logreg",
            Model::Svm(_) => "svm",
            Model::Cnn(_) => "cnn",
        }
    }

    pub fn predict(&self, x: Features<'_>) -> Result<Prediction, ClassifyError> {
        match (self, x) {
            (Model::LogReg(m), Features::Tfidf(v)) => m.predict(v),
            (Model::Svm(m), Features::Tfidf(v)) => m.predict(v),
            (Model::Cnn(m), Features::Sequence(s)) => m.predict(s),
            _ => Err(ClassifyError::WrongFeatureForm(self.family())),
        }
    }
}

pub(crate) fn check_labels(y: &[Label]) -> Result<(), ClassifyError> {
    let pos = y.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == y.len() {
        return Err(ClassifyError::SingleClass);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_tie_goes_to_class_one() {
        assert_eq!(Prediction::from_p1(0.5).label, Label::Depressed);
        assert_eq!(Prediction::from_p1(0.4999).label, Label::NotDepressed);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn wrong_feature_form() {
        let m = Model::LogReg(LogRegModel::zeros(3, 1.0));
        let seq = Matrix::zeros(2, 2);
        assert!(matches!(m.predict(Features::Sequence(&seq)), Err(ClassifyError::WrongFeatureForm("logreg"))));
    }
}

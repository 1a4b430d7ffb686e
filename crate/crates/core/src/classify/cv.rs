use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifyError, Prediction};
use crate::corpus::Label;
use crate::metrics::prf_report;

/// Something that can be fitted at a grid point and scored on held-out rows.
pub trait CvTrainer<X> {
    type Point;
    type Model;

    fn fit(&self, point: &Self::Point, xs: &[&X], ys: &[Label]) -> Result<Self::Model, ClassifyError>;
    fn predict(&self, model: &Self::Model, x: &X) -> Result<Prediction, ClassifyError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMetric {
    #[default]
    F1,
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult<P> {
    pub best_index: usize,
    pub best: P,
    pub best_score: f64,
    /// Mean validation metric per grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Assigns each row a fold in `0..k`, stratified by class: each class is
/// shuffled under `seed` and dealt round-robin.
pub fn stratified_folds(ys: &[Label], k: usize, seed: u64) -> Result<Vec<usize>, ClassifyError> {
    if k < 2 {
        return Err(ClassifyError::InvalidConfig("k must be at least 2".into()));
    }
    if ys.len() < k {
        return Err(ClassifyError::TooFewSamples { samples: ys.len(), folds: k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; ys.len()];
    let mut offset = 0;
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == label).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.iter().enumerate() {
            folds[*i] = (offset + pos) % k;
        }
        // continue the deal so small classes do not all land in fold 0
        offset += idx.len();
    }
    Ok(folds)
}

/// k-fold cross-validated grid search. Ties go to the earliest grid point.
pub fn grid_search_cv<X, T: CvTrainer<X>>(
    trainer: &T,
    grid: &[T::Point],
    k: usize,
    xs: &[X],
    ys: &[Label],
    metric: CvMetric,
    seed: u64,
) -> Result<GridSearchResult<T::Point>, ClassifyError>
where
    T::Point: Clone,
{
    if grid.is_empty() {
        return Err(ClassifyError::InvalidConfig("grid is empty".into()));
    }
    if xs.len() != ys.len() {
        return Err(ClassifyError::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    let folds = stratified_folds(ys, k, seed)?;
    let mut scores = Vec::with_capacity(grid.len());
    for point in grid {
        let mut total = 0.0;
        for f in 0..k {
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (i, x) in xs.iter().enumerate() {
                if folds[i] == f {
                    vx.push(x);
                    vy.push(ys[i]);
                } else {
                    tx.push(x);
                    ty.push(ys[i]);
                }
            }
            let model = trainer.fit(point, &tx, &ty)?;
            let preds =
                vx.iter().map(|x| trainer.predict(&model, x).map(|p| p.label)).collect::<Result<Vec<_>, _>>()?;
            let report = prf_report(&preds, &vy).expect("validation fold is non-empty");
            total += match metric {
                CvMetric::F1 => report.f1,
                CvMetric::Accuracy => report.accuracy,
            };
        }
        scores.push(total / k as f64);
    }
    let mut best_index = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridSearchResult { best_index, best: grid[best_index].clone(), best_score: scores[best_index], scores })
}

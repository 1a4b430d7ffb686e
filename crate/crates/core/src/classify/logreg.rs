use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_labels, Adam, ClassifyError, FeatureVector, Prediction, TrainConfig};
use crate::corpus::Label;
use crate::linalg::{sigmoid, softplus};

/// Binary logistic regression with an L2 penalty `‖w‖² / (2C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Inverse regularisation strength.
    pub c: f64,
}

impl LogRegModel {
    pub fn zeros(dim: usize, c: f64) -> Self {
        Self { weights: vec![0.0; dim], bias: 0.0, c }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit<X: FeatureVector>(&self, x: &X) -> Result<f64, ClassifyError> {
        if !x.fits_dim(self.dim()) {
            return Err(ClassifyError::DimensionMismatch { expected: self.dim(), found: x.dim_hint() });
        }
        Ok(x.dot(&self.weights) + self.bias)
    }

    pub fn predict<X: FeatureVector>(&self, x: &X) -> Result<Prediction, ClassifyError> {
        Ok(Prediction::from_p1(sigmoid(self.logit(x)?)))
    }

    /// Mean binary cross-entropy plus the L2 penalty.
    pub fn objective<X: FeatureVector>(&self, xs: &[X], ys: &[Label]) -> f64 {
        let loss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let z = x.dot(&self.weights) + self.bias;
                // -[y ln σ(z) + (1-y) ln(1-σ(z))] = softplus(z) - y z
                softplus(z) - if y.is_positive() { z } else { 0.0 }
            })
            .sum::<f64>()
            / xs.len() as f64;
        loss + self.penalty()
    }

    fn penalty(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * self.c)
    }

    /// Gradient of [`objective`](Self::objective) over the given rows:
    /// `(∂/∂w, ∂/∂b)`.
    pub fn gradient<X: FeatureVector>(&self, xs: &[&X], ys: &[Label]) -> (Vec<f64>, f64) {
        let n = xs.len() as f64;
        let mut gw: Vec<f64> = self.weights.iter().map(|w| w / self.c).collect();
        let mut gb = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let z = x.dot(&self.weights) + self.bias;
            let dz = (sigmoid(z) - if y.is_positive() { 1.0 } else { 0.0 }) / n;
            x.add_scaled_to(dz, &mut gw);
            gb += dz;
        }
        (gw, gb)
    }
}

fn infer_dim<X: FeatureVector>(xs: &[X], dim: Option<usize>) -> Result<usize, ClassifyError> {
    let needed = xs.iter().map(FeatureVector::dim_hint).max().unwrap_or(0);
    let dim = dim.unwrap_or(needed);
    if let Some(bad) = xs.iter().find(|x| !x.fits_dim(dim)) {
        return Err(ClassifyError::DimensionMismatch { expected: dim, found: bad.dim_hint() });
    }
    Ok(dim)
}

fn check_inputs<X: FeatureVector>(xs: &[X], ys: &[Label]) -> Result<(), ClassifyError> {
    if xs.len() != ys.len() {
        return Err(ClassifyError::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(ClassifyError::SingleClass);
    }
    check_labels(ys)
}

/// Mini-batch Adam on mean cross-entropy + `‖w‖²/(2C)`.
///
/// `dim` is the feature dimension (vocabulary size); when `None` it is
/// inferred from the largest index present.
pub fn train_logreg<X: FeatureVector>(
    xs: &[X],
    ys: &[Label],
    dim: Option<usize>,
    cfg: &TrainConfig,
    c: f64,
) -> Result<LogRegModel, ClassifyError> {
    cfg.validate()?;
    check_inputs(xs, ys)?;
    if c.is_nan() || c <= 0.0 {
        return Err(ClassifyError::InvalidConfig(format!("C must be positive, got {c}")));
    }
    let dim = infer_dim(xs, dim)?;
    let mut model = LogRegModel::zeros(dim, c);
    let mut adam = Adam::new(dim + 1, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut params = vec![0.0; dim + 1];
    let mut grads = vec![0.0; dim + 1];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bx: Vec<&X> = batch.iter().map(|&i| &xs[i]).collect();
            let by: Vec<Label> = batch.iter().map(|&i| ys[i]).collect();
            let (gw, gb) = model.gradient(&bx, &by);
            grads[..dim].copy_from_slice(&gw);
            grads[dim] = gb;
            params[..dim].copy_from_slice(&model.weights);
            params[dim] = model.bias;
            adam.step(&mut params, &grads);
            model.weights.copy_from_slice(&params[..dim]);
            model.bias = params[dim];
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchTrace {
    /// Objective before the first step and after every accepted step.
    pub objectives: Vec<f64>,
    /// Accepted step sizes.
    pub step_sizes: Vec<f64>,
}

/// Full-batch gradient descent; each step halves the learning rate until the
/// objective does not increase. Stops early once no decrease is found above
/// a step size of `1e-12`.
pub fn train_logreg_line_search<X: FeatureVector>(
    xs: &[X],
    ys: &[Label],
    dim: Option<usize>,
    c: f64,
    steps: usize,
    initial_lr: f64,
) -> Result<(LogRegModel, LineSearchTrace), ClassifyError> {
    check_inputs(xs, ys)?;
    let dim = infer_dim(xs, dim)?;
    let mut model = LogRegModel::zeros(dim, c);
    let all: Vec<&X> = xs.iter().collect();
    let mut current = model.objective(xs, ys);
    let mut trace = LineSearchTrace { objectives: vec![current], step_sizes: Vec::new() };

    for _ in 0..steps {
        let (gw, gb) = model.gradient(&all, ys);
        let mut lr = initial_lr;
        let accepted = loop {
            let mut trial = model.clone();
            for (w, g) in trial.weights.iter_mut().zip(&gw) {
                *w -= lr * g;
            }
            trial.bias -= lr * gb;
            let obj = trial.objective(xs, ys);
            if obj <= current {
                break Some((trial, obj));
            }
            lr /= 2.0;
            if lr < 1e-12 {
                break None;
            }
        };
        let Some((trial, obj)) = accepted else { break };
        model = trial;
        current = obj;
        trace.objectives.push(obj);
        trace.step_sizes.push(lr);
    }
    Ok((model, trace))
}

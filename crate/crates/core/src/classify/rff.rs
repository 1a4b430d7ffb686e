use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_labels, Adam, ClassifyError, FeatureVector, Prediction, TrainConfig};
use crate::corpus::Label;
use crate::linalg::{dot, sigmoid, Matrix};

/// Random Fourier features for `k(x, y) = exp(-γ‖x - y‖²)`:
/// `z(x) = √(2/D) · cos(Ωx + β)` with rows of Ω drawn from `N(0, 2γI)` and
/// β uniform on `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    /// `D × d`, row-major.
    pub projection: Matrix,
    pub phases: Vec<f64>,
    pub gamma: f64,
}

impl RffMap {
    pub fn sample(input_dim: usize, features: usize, gamma: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 * gamma).sqrt()).expect("gamma is positive");
        let data = (0..features * input_dim).map(|_| normal.sample(rng)).collect();
        let phases = (0..features).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self { projection: Matrix::from_vec(features, input_dim, data), phases, gamma }
    }

    pub fn input_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn features(&self) -> usize {
        self.projection.rows()
    }

    pub fn transform<X: FeatureVector>(&self, x: &X) -> Vec<f64> {
        let scale = (2.0 / self.features() as f64).sqrt();
        (0..self.features()).map(|r| scale * (x.dot(self.projection.row(r)) + self.phases[r]).cos()).collect()
    }

    /// `z(x)ᵀz(y)`, the approximated kernel value.
    pub fn kernel<X: FeatureVector>(&self, x: &X, y: &X) -> f64 {
        dot(&self.transform(x), &self.transform(y))
    }
}

/// Linear hinge-loss SVM on random Fourier features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffSvmModel {
    pub map: RffMap,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl RffSvmModel {
    pub fn gamma(&self) -> f64 {
        self.map.gamma
    }

    pub fn features(&self) -> usize {
        self.map.features()
    }

    pub fn margin<X: FeatureVector>(&self, x: &X) -> Result<f64, ClassifyError> {
        let d = self.map.input_dim();
        if !x.fits_dim(d) {
            return Err(ClassifyError::DimensionMismatch { expected: d, found: x.dim_hint() });
        }
        Ok(dot(&self.map.transform(x), &self.weights) + self.bias)
    }

    /// `p1 = σ(margin)`.
    pub fn predict<X: FeatureVector>(&self, x: &X) -> Result<Prediction, ClassifyError> {
        Ok(Prediction::from_p1(sigmoid(self.margin(x)?)))
    }
}

/// Mean hinge loss + `‖v‖²/(2C)` minimised by mini-batch subgradient steps
/// with Adam moment scaling.
#[allow(clippy::too_many_arguments)]
pub fn train_svm_rff<X: FeatureVector>(
    xs: &[X],
    ys: &[Label],
    dim: Option<usize>,
    cfg: &TrainConfig,
    c: f64,
    gamma: f64,
    features: usize,
) -> Result<RffSvmModel, ClassifyError> {
    cfg.validate()?;
    if xs.len() != ys.len() {
        return Err(ClassifyError::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    check_labels(ys)?;
    if features == 0 || c.is_nan() || c <= 0.0 || gamma.is_nan() || gamma <= 0.0 {
        return Err(ClassifyError::InvalidConfig("C, gamma and D must be positive".into()));
    }
    let needed = xs.iter().map(FeatureVector::dim_hint).max().unwrap_or(0);
    let dim = dim.unwrap_or(needed);
    if let Some(bad) = xs.iter().find(|x| !x.fits_dim(dim)) {
        return Err(ClassifyError::DimensionMismatch { expected: dim, found: bad.dim_hint() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let map = RffMap::sample(dim, features, gamma, &mut rng);
    let zs: Vec<Vec<f64>> = xs.iter().map(|x| map.transform(x)).collect();
    let signs: Vec<f64> = ys.iter().map(|y| if y.is_positive() { 1.0 } else { -1.0 }).collect();

    let mut params = vec![0.0; features + 1];
    let mut adam = Adam::new(features + 1, cfg);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grads = vec![0.0; features + 1];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let n = batch.len() as f64;
            for (g, w) in grads[..features].iter_mut().zip(&params[..features]) {
                *g = w / c;
            }
            grads[features] = 0.0;
            for &i in batch {
                let f = dot(&zs[i], &params[..features]) + params[features];
                if signs[i] * f < 1.0 {
                    for (g, z) in grads[..features].iter_mut().zip(&zs[i]) {
                        *g -= signs[i] * z / n;
                    }
                    grads[features] -= signs[i] / n;
                }
            }
            adam.step(&mut params, &grads);
        }
    }
    let bias = params.pop().expect("bias slot");
    Ok(RffSvmModel { map, weights: params, bias, c })
}

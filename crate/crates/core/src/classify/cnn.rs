use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_labels, Adam, ClassifyError, Prediction, TrainConfig};
use crate::corpus::Label;
use crate::linalg::{dot, sigmoid, softplus, Matrix};

pub const CNN_DROPOUT: f64 = 0.30;

const C1_FILTERS: usize = 24;
const C1_WIDTH: usize = 10;
const C2_FILTERS: usize = 8;
const C2_WIDTH: usize = 5;
const POOL: usize = 2;
const OUTPUTS: usize = 2;

/// conv(24×10, ReLU) → maxpool(2) → conv(8×5, ReLU) → maxpool(2) → flatten →
/// dropout(0.3) → dense(2) → sigmoid, over `max_len × dim` embedding rows.
///
/// Parameters live in one flat vector: conv1 weights `[24][10][dim]`, conv1
/// bias, conv2 weights `[8][5][24]`, conv2 bias, dense weights `[2][F]`, dense
/// bias. The flattened feature index is `position · 8 + channel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    dim: usize,
    max_len: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    dim: usize,
    l1: usize,
    p1: usize,
    l2: usize,
    p2: usize,
}

impl Shape {
    fn new(dim: usize, max_len: usize) -> Result<Self, ClassifyError> {
        if max_len < C1_WIDTH {
            return Err(ClassifyError::InputTooShort(max_len));
        }
        let l1 = max_len - C1_WIDTH + 1;
        let p1 = l1 / POOL;
        if p1 < C2_WIDTH {
            return Err(ClassifyError::InputTooShort(max_len));
        }
        let l2 = p1 - C2_WIDTH + 1;
        let p2 = l2 / POOL;
        if p2 < 1 {
            return Err(ClassifyError::InputTooShort(max_len));
        }
        Ok(Self { dim, l1, p1, l2, p2 })
    }

    fn flat(&self) -> usize {
        self.p2 * C2_FILTERS
    }

    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        C1_FILTERS * C1_WIDTH * self.dim
    }
    fn w2(&self) -> usize {
        self.b1() + C1_FILTERS
    }
    fn b2(&self) -> usize {
        self.w2() + C2_FILTERS * C2_WIDTH * C1_FILTERS
    }
    fn wd(&self) -> usize {
        self.b2() + C2_FILTERS
    }
    fn bd(&self) -> usize {
        self.wd() + OUTPUTS * self.flat()
    }
    fn total(&self) -> usize {
        self.bd() + OUTPUTS
    }
}

struct Forward {
    a1: Vec<f64>,
    pool1: Vec<f64>,
    arg1: Vec<usize>,
    a2: Vec<f64>,
    arg2: Vec<usize>,
    dropped: Vec<f64>,
    logits: [f64; OUTPUTS],
}

/// Flat gradient vector in the same layout as [`CnnModel::params`].
pub type CnnGradients = Vec<f64>;

fn targets(label: Label) -> [f64; OUTPUTS] {
    if label.is_positive() {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

fn max_pool(values: &[f64], len: usize, channels: usize) -> (Vec<f64>, Vec<usize>) {
    let pooled_len = len / POOL;
    let mut out = vec![0.0; pooled_len * channels];
    let mut arg = vec![0; pooled_len * channels];
    for t in 0..pooled_len {
        for c in 0..channels {
            let (i0, i1) = (POOL * t, POOL * t + 1);
            let (v0, v1) = (values[i0 * channels + c].max(0.0), values[i1 * channels + c].max(0.0));
            let (v, i) = if v1 > v0 { (v1, i1) } else { (v0, i0) };
            out[t * channels + c] = v;
            arg[t * channels + c] = i;
        }
    }
    (out, arg)
}

impl CnnModel {
    /// He-uniform convolutions, Glorot-uniform dense layer, zero biases.
    pub fn new(dim: usize, max_len: usize, seed: u64) -> Result<Self, ClassifyError> {
        if dim == 0 {
            return Err(ClassifyError::InvalidConfig("embedding dimension must be positive".into()));
        }
        let s = Shape::new(dim, max_len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; s.total()];
        let mut fill = |range: std::ops::Range<usize>, limit: f64| {
            for p in &mut params[range] {
                *p = rng.random_range(-limit..limit);
            }
        };
        fill(s.w1()..s.b1(), (6.0 / (C1_WIDTH * dim) as f64).sqrt());
        fill(s.w2()..s.b2(), (6.0 / (C2_WIDTH * C1_FILTERS) as f64).sqrt());
        fill(s.wd()..s.bd(), (6.0 / (s.flat() + OUTPUTS) as f64).sqrt());
        Ok(Self { dim, max_len, params })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Width of the flattened feature vector (dropout mask length).
    pub fn flat_features(&self) -> usize {
        self.shape().flat()
    }

    /// Named parameter blocks with their shapes, in storage order.
    pub fn param_blocks(&self) -> Vec<(&'static str, Vec<usize>, std::ops::Range<usize>)> {
        let s = self.shape();
        vec![
            ("conv1.weight", vec![C1_FILTERS, C1_WIDTH, self.dim], s.w1()..s.b1()),
            ("conv1.bias", vec![C1_FILTERS], s.b1()..s.w2()),
            ("conv2.weight", vec![C2_FILTERS, C2_WIDTH, C1_FILTERS], s.w2()..s.b2()),
            ("conv2.bias", vec![C2_FILTERS], s.b2()..s.wd()),
            ("dense.weight", vec![OUTPUTS, s.flat()], s.wd()..s.bd()),
            ("dense.bias", vec![OUTPUTS], s.bd()..s.total()),
        ]
    }

    /// Rebuilds a model from its flat parameter vector.
    pub fn from_params(dim: usize, max_len: usize, params: Vec<f64>) -> Result<Self, ClassifyError> {
        let s = Shape::new(dim, max_len)?;
        if params.len() != s.total() {
            return Err(ClassifyError::DimensionMismatch { expected: s.total(), found: params.len() });
        }
        Ok(Self { dim, max_len, params })
    }

    fn shape(&self) -> Shape {
        Shape::new(self.dim, self.max_len).expect("validated at construction")
    }

    fn check_input(&self, x: &Matrix) -> Result<(), ClassifyError> {
        if x.shape() != (self.max_len, self.dim) {
            return Err(ClassifyError::ShapeMismatch { expected: (self.max_len, self.dim), found: x.shape() });
        }
        Ok(())
    }

    /// Inverted-dropout mask: 0 with probability 0.3, else `1/0.7`.
    pub fn dropout_mask(&self, rng: &mut impl Rng) -> Vec<f64> {
        let keep = 1.0 - CNN_DROPOUT;
        (0..self.flat_features()).map(|_| if rng.random::<f64>() < CNN_DROPOUT { 0.0 } else { 1.0 / keep }).collect()
    }

    fn forward(&self, x: &Matrix, mask: Option<&[f64]>) -> Forward {
        let s = self.shape();
        let p = &self.params;
        let xs = x.as_slice();
        let win1 = C1_WIDTH * s.dim;
        let mut a1 = vec![0.0; s.l1 * C1_FILTERS];
        for t in 0..s.l1 {
            let window = &xs[t * s.dim..t * s.dim + win1];
            for f in 0..C1_FILTERS {
                let w = &p[s.w1() + f * win1..s.w1() + (f + 1) * win1];
                a1[t * C1_FILTERS + f] = dot(w, window) + p[s.b1() + f];
            }
        }
        let (pool1, arg1) = max_pool(&a1, s.l1, C1_FILTERS);

        let win2 = C2_WIDTH * C1_FILTERS;
        let mut a2 = vec![0.0; s.l2 * C2_FILTERS];
        for t in 0..s.l2 {
            let window = &pool1[t * C1_FILTERS..t * C1_FILTERS + win2];
            for g in 0..C2_FILTERS {
                let w = &p[s.w2() + g * win2..s.w2() + (g + 1) * win2];
                a2[t * C2_FILTERS + g] = dot(w, window) + p[s.b2() + g];
            }
        }
        let (mut dropped, arg2) = max_pool(&a2, s.l2, C2_FILTERS);
        if let Some(mask) = mask {
            for (d, m) in dropped.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        let f = s.flat();
        let mut logits = [0.0; OUTPUTS];
        for (j, z) in logits.iter_mut().enumerate() {
            *z = dot(&p[s.wd() + j * f..s.wd() + (j + 1) * f], &dropped) + p[s.bd() + j];
        }
        Forward { a1, pool1, arg1, a2, arg2, dropped, logits }
    }

    /// The two sigmoid outputs at inference (no dropout).
    pub fn scores(&self, x: &Matrix) -> Result<[f64; OUTPUTS], ClassifyError> {
        self.check_input(x)?;
        let z = self.forward(x, None).logits;
        Ok([sigmoid(z[0]), sigmoid(z[1])])
    }

    /// `p1 = s1 / (s0 + s1 + 1e-12)`; class 1 only when `s1 > s0`.
    pub fn predict(&self, x: &Matrix) -> Result<Prediction, ClassifyError> {
        let [s0, s1] = self.scores(x)?;
        Ok(Prediction { p1: s1 / (s0 + s1 + 1e-12), label: Label::from_bool(s1 > s0) })
    }

    /// Binary cross-entropy averaged over the two outputs.
    pub fn loss(&self, x: &Matrix, label: Label, mask: Option<&[f64]>) -> Result<f64, ClassifyError> {
        self.check_input(x)?;
        let z = self.forward(x, mask).logits;
        Ok(bce(z, targets(label)))
    }

    pub fn mean_loss(&self, xs: &[Matrix], ys: &[Label]) -> Result<f64, ClassifyError> {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            total += self.loss(x, *y, None)?;
        }
        Ok(total / xs.len() as f64)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        label: Label,
        mask: Option<&[f64]>,
    ) -> Result<(f64, CnnGradients), ClassifyError> {
        self.check_input(x)?;
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_grad(x, label, mask, 1.0, &mut grad);
        Ok((loss, grad))
    }

    fn accumulate_grad(&self, x: &Matrix, label: Label, mask: Option<&[f64]>, scale: f64, grad: &mut [f64]) -> f64 {
        let s = self.shape();
        let p = &self.params;
        let fw = self.forward(x, mask);
        let t = targets(label);
        let f = s.flat();

        // d/dz of mean_j [softplus(z_j) - t_j z_j]
        let mut dz = [0.0; OUTPUTS];
        for j in 0..OUTPUTS {
            dz[j] = scale * (sigmoid(fw.logits[j]) - t[j]) / OUTPUTS as f64;
        }
        let mut dflat = vec![0.0; f];
        for j in 0..OUTPUTS {
            let wrow = s.wd() + j * f;
            for i in 0..f {
                grad[wrow + i] += dz[j] * fw.dropped[i];
                dflat[i] += dz[j] * p[wrow + i];
            }
            grad[s.bd() + j] += dz[j];
        }
        if let Some(mask) = mask {
            for (d, m) in dflat.iter_mut().zip(mask) {
                *d *= m;
            }
        }

        let mut da2 = vec![0.0; s.l2 * C2_FILTERS];
        for tp in 0..s.p2 {
            for g in 0..C2_FILTERS {
                let src = fw.arg2[tp * C2_FILTERS + g];
                let idx = src * C2_FILTERS + g;
                if fw.a2[idx] > 0.0 {
                    da2[idx] += dflat[tp * C2_FILTERS + g];
                }
            }
        }

        let win2 = C2_WIDTH * C1_FILTERS;
        let mut dpool1 = vec![0.0; s.p1 * C1_FILTERS];
        for tt in 0..s.l2 {
            for g in 0..C2_FILTERS {
                let d = da2[tt * C2_FILTERS + g];
                if d == 0.0 {
                    continue;
                }
                let w0 = s.w2() + g * win2;
                let x0 = tt * C1_FILTERS;
                for k in 0..win2 {
                    grad[w0 + k] += d * fw.pool1[x0 + k];
                    dpool1[x0 + k] += d * p[w0 + k];
                }
                grad[s.b2() + g] += d;
            }
        }

        let mut da1 = vec![0.0; s.l1 * C1_FILTERS];
        for tp in 0..s.p1 {
            for c in 0..C1_FILTERS {
                let src = fw.arg1[tp * C1_FILTERS + c];
                let idx = src * C1_FILTERS + c;
                if fw.a1[idx] > 0.0 {
                    da1[idx] += dpool1[tp * C1_FILTERS + c];
                }
            }
        }

        let xs = x.as_slice();
        let win1 = C1_WIDTH * s.dim;
        for tt in 0..s.l1 {
            let window = &xs[tt * s.dim..tt * s.dim + win1];
            for fl in 0..C1_FILTERS {
                let d = da1[tt * C1_FILTERS + fl];
                if d == 0.0 {
                    continue;
                }
                let w0 = s.w1() + fl * win1;
                for (g, xv) in grad[w0..w0 + win1].iter_mut().zip(window) {
                    *g += d * xv;
                }
                grad[s.b1() + fl] += d;
            }
        }

        bce(fw.logits, t)
    }
}

fn bce(z: [f64; OUTPUTS], t: [f64; OUTPUTS]) -> f64 {
    z.iter().zip(&t).map(|(z, t)| softplus(*z) - t * z).sum::<f64>() / OUTPUTS as f64
}

/// Mini-batch Adam on the mean loss with dropout active; embeddings are
/// inputs, not parameters.
pub fn train_cnn(xs: &[Matrix], ys: &[Label], cfg: &TrainConfig) -> Result<CnnModel, ClassifyError> {
    cfg.validate()?;
    if xs.len() != ys.len() {
        return Err(ClassifyError::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    check_labels(ys)?;
    let shape = xs[0].shape();
    if let Some(bad) = xs.iter().find(|x| x.shape() != shape) {
        return Err(ClassifyError::ShapeMismatch { expected: shape, found: bad.shape() });
    }
    let (max_len, dim) = shape;
    let mut model = CnnModel::new(dim, max_len, cfg.seed)?;
    let mut adam = Adam::new(model.params.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grad = vec![0.0; model.params.len()];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mask = model.dropout_mask(&mut rng);
                model.accumulate_grad(&xs[i], ys[i], Some(&mask), scale, &mut grad);
            }
            adam.step(&mut model.params, &grad);
        }
    }
    Ok(model)
}

//! Local surrogate explanations: perturb a document by removing token types,
//! score every variant with the model, and fit a proximity-weighted ridge
//! regression of the probability on the presence masks.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::TokenDoc;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("document has no tokens to explain")]
    EmptyDoc,
    #[error("invalid explanation config: {0}")]
    InvalidConfig(String),
    #[error("model failed on a perturbed document: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub samples: usize,
    pub top_k: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self { samples: 1000, top_k: 10, kernel_width: 25.0, ridge_lambda: 1.0, seed: 0 }
    }
}

impl LimeConfig {
    fn validate(&self) -> Result<(), ExplainError> {
        if self.samples == 0 || self.top_k == 0 {
            return Err(ExplainError::InvalidConfig("samples and top_k must be at least 1".into()));
        }
        if self.kernel_width.is_nan()
            || self.kernel_width <= 0.0
            || self.ridge_lambda.is_nan()
            || self.ridge_lambda < 0.0
        {
            return Err(ExplainError::InvalidConfig("kernel_width > 0 and ridge_lambda >= 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// One entry per unique token in first-occurrence order; `true` = kept.
    pub mask: Vec<bool>,
    pub proximity: f64,
    /// Model probability on the masked document, once scored.
    pub p1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Sorted by `|weight|` descending.
    #[serde(rename = "tokens")]
    pub items: Vec<TokenWeight>,
    pub intercept: f64,
    pub model_p1: f64,
    pub local_r2: f64,
    /// Every perturbation scored the same probability.
    #[serde(default)]
    pub degenerate: bool,
}

/// Cosine distance between a binary mask and the all-ones vector; an empty
/// mask is at distance 1.
pub fn mask_distance(mask: &[bool]) -> f64 {
    let kept = mask.iter().filter(|&&b| b).count();
    if kept == 0 {
        return 1.0;
    }
    1.0 - (kept as f64 / mask.len() as f64).sqrt()
}

pub fn proximity(mask: &[bool], kernel_width: f64) -> f64 {
    let d = mask_distance(mask);
    (-(d * d) / (kernel_width * kernel_width)).exp()
}

/// Sample 0 keeps everything; every other sample removes `k ~ U{1..m}`
/// distinct token types.
pub fn sample_perturbations(
    doc: &TokenDoc,
    n: usize,
    kernel_width: f64,
    seed: u64,
) -> Result<Vec<Perturbation>, ExplainError> {
    let m = doc.unique_tokens().len();
    if m == 0 {
        return Err(ExplainError::EmptyDoc);
    }
    if n == 0 {
        return Err(ExplainError::InvalidConfig("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    out.push(Perturbation { mask: vec![true; m], proximity: 1.0, p1: None });
    for _ in 1..n {
        let k = rng.random_range(1..=m);
        let mut mask = vec![true; m];
        for i in sample(&mut rng, m, k) {
            mask[i] = false;
        }
        let proximity = proximity(&mask, kernel_width);
        out.push(Perturbation { mask, proximity, p1: None });
    }
    Ok(out)
}

/// Drops every occurrence of the token types whose mask entry is `false`.
pub fn apply_mask(doc: &TokenDoc, mask: &[bool]) -> TokenDoc {
    let unique = doc.unique_tokens();
    let removed: std::collections::HashSet<&str> =
        unique.iter().zip(mask).filter(|(_, keep)| !**keep).map(|(t, _)| *t).collect();
    let tokens: Vec<String> = doc.tokens.iter().filter(|t| !removed.contains(t.as_str())).cloned().collect();
    TokenDoc::from_tokens(tokens)
}

struct RidgeFit {
    coef: Vec<f64>,
    intercept: f64,
    r2: f64,
}

/// Weighted ridge with an unpenalised intercept over the selected columns.
fn weighted_ridge(masks: &[Vec<bool>], cols: &[usize], y: &[f64], w: &[f64], lambda: f64) -> RidgeFit {
    let n = y.len();
    let p = cols.len();
    let wsum: f64 = w.iter().sum();
    let x = |i: usize, j: usize| if masks[i][cols[j]] { 1.0 } else { 0.0 };
    let y_mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let x_mean: Vec<f64> = (0..p).map(|j| (0..n).map(|i| w[i] * x(i, j)).sum::<f64>() / wsum).collect();

    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for i in 0..n {
        let xc: Vec<f64> = (0..p).map(|j| x(i, j) - x_mean[j]).collect();
        let yc = y[i] - y_mean;
        for r in 0..p {
            b[r] += w[i] * xc[r] * yc;
            for c in 0..p {
                a[(r, c)] += w[i] * xc[r] * xc[c];
            }
        }
    }
    for d in 0..p {
        a[(d, d)] += lambda;
    }
    let coef: Vec<f64> = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b).iter().copied().collect(),
        None => a.lu().solve(&b).map_or_else(|| vec![0.0; p], |s| s.iter().copied().collect()),
    };
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();

    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..n {
        let pred = intercept + (0..p).map(|j| coef[j] * x(i, j)).sum::<f64>();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - y_mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    RidgeFit { coef, intercept, r2 }
}

/// Explains `p1_of(doc)` with a proximity-weighted ridge surrogate, keeping
/// the `top_k` tokens by `|coefficient|` from a full fit and refitting on
/// them.
pub fn explain<F, E>(p1_of: F, doc: &TokenDoc, cfg: &LimeConfig) -> Result<Explanation, ExplainError>
where
    F: Fn(&TokenDoc) -> Result<f64, E>,
    E: std::fmt::Display,
{
    cfg.validate()?;
    let mut samples = sample_perturbations(doc, cfg.samples, cfg.kernel_width, cfg.seed)?;
    for s in &mut samples {
        let p = p1_of(&apply_mask(doc, &s.mask)).map_err(|e| ExplainError::Model(e.to_string()))?;
        s.p1 = Some(p);
    }
    let unique: Vec<String> = doc.unique_tokens().into_iter().map(str::to_string).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.p1.expect("scored above")).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.proximity).collect();
    let masks: Vec<Vec<bool>> = samples.into_iter().map(|s| s.mask).collect();
    let model_p1 = y[0];

    if y.iter().all(|v| *v == y[0]) {
        return Ok(Explanation {
            items: unique.iter().take(cfg.top_k).map(|t| TokenWeight { token: t.clone(), weight: 0.0 }).collect(),
            intercept: y[0],
            model_p1,
            local_r2: 1.0,
            degenerate: true,
        });
    }

    let all: Vec<usize> = (0..unique.len()).collect();
    let full = weighted_ridge(&masks, &all, &y, &w, cfg.ridge_lambda);
    let mut ranked = all.clone();
    // stable sort keeps first-occurrence order among equal magnitudes
    ranked.sort_by(|&a, &b| full.coef[b].abs().total_cmp(&full.coef[a].abs()));
    ranked.truncate(cfg.top_k);
    let fit = if ranked.len() == all.len() {
        full
    } else {
        let mut cols = ranked.clone();
        cols.sort_unstable();
        let refit = weighted_ridge(&masks, &cols, &y, &w, cfg.ridge_lambda);
        let mut full_coef = vec![0.0; all.len()];
        for (j, c) in cols.iter().zip(&refit.coef) {
            full_coef[*j] = *c;
        }
        ranked.sort_by(|&a, &b| full_coef[b].abs().total_cmp(&full_coef[a].abs()).then(a.cmp(&b)));
        RidgeFit { coef: full_coef, intercept: refit.intercept, r2: refit.r2 }
    };
    let items = ranked.iter().map(|&j| TokenWeight { token: unique[j].clone(), weight: fit.coef[j] }).collect();
    Ok(Explanation { items, intercept: fit.intercept, model_p1, local_r2: fit.r2, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::convert::Infallible;

    fn doc(words: &str) -> TokenDoc {
        TokenDoc::from_tokens(words.split_whitespace())
    }

    #[test]
    fn single_token_has_two_masks() {
        let s = sample_perturbations(&doc("sad"), 2, 25.0, 0).unwrap();
        assert_eq!(s[0].mask, vec![true]);
        assert_eq!(s[1].mask, vec![false]);
        assert_eq!(s[0].proximity, 1.0);
    }

    #[test]
    fn distance_of_half_mask() {
        let mask = [true, false, true, false];
        let d = 1.0 - 2.0 / (2.0f64 * 4.0).sqrt();
        assert!((mask_distance(&mask) - d).abs() < 1e-15);
        assert!((proximity(&mask, 25.0) - (-(d * d) / 625.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn empty_doc_is_an_error() {
        assert_eq!(sample_perturbations(&doc(""), 5, 25.0, 0), Err(ExplainError::EmptyDoc));
    }

    #[test]
    fn masking_removes_every_occurrence() {
        let d = doc("a b a c");
        assert_eq!(apply_mask(&d, &[false, true, true]).tokens, vec!["b", "c"]);
    }

    #[test]
    fn constant_model_is_degenerate() {
        let e = explain(|_| Ok::<_, Infallible>(0.3), &doc("a b c"), &LimeConfig::default()).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.intercept, 0.3);
        assert!(e.items.iter().all(|i| i.weight == 0.0));
    }

    #[test]
    fn linear_presence_model_is_recovered() {
        let weights: HashMap<&str, f64> =
            [("a", 0.30), ("b", -0.20), ("c", 0.10), ("d", 0.05), ("e", -0.02)].into_iter().collect();
        let model = |d: &TokenDoc| Ok::<_, Infallible>(0.4 + d.unique_tokens().iter().map(|t| weights[t]).sum::<f64>());
        let cfg = LimeConfig { samples: 5000, ridge_lambda: 1e-9, ..Default::default() };
        let e = explain(model, &doc("a b c d e"), &cfg).unwrap();
        for item in &e.items[..3] {
            let truth = weights[item.token.as_str()];
            assert!((item.weight - truth).abs() <= 0.1 * truth.abs(), "{item:?}");
        }
        assert_eq!(e.items[0].token, "a");
        assert!(e.local_r2 > 0.999 && e.local_r2 <= 1.0);
    }

    #[test]
    fn top_k_limits_items_and_is_deterministic() {
        let model = |d: &TokenDoc| Ok::<_, Infallible>(d.len() as f64 / 20.0);
        let d = doc("a b c d e f g h i j k l");
        let cfg = LimeConfig { top_k: 4, samples: 300, ..Default::default() };
        let e1 = explain(model, &d, &cfg).unwrap();
        let e2 = explain(model, &d, &cfg).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.items.len(), 4);
        let unique: std::collections::HashSet<_> = e1.items.iter().map(|i| &i.token).collect();
        assert_eq!(unique.len(), 4);
    }
}

//! Classification metrics, cosine similarity, ROUGE-N/L and embedding-based
//! response similarity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::textprep::{fit_tfidf, preprocess, tfidf_transform, EmbeddingTable, PreprocessConfig, TokenDoc};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no pairs to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_pairs(preds: &[Label], gold: &[Label]) -> Result<Self, MetricsError> {
        if preds.len() != gold.len() {
            return Err(MetricsError::LengthMismatch { left: preds.len(), right: gold.len() });
        }
        let mut c = Self::default();
        for (p, g) in preds.iter().zip(gold) {
            match (p.is_positive(), g.is_positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn report(&self) -> Result<MetricReport, MetricsError> {
        if self.total() == 0 {
            return Err(MetricsError::Empty);
        }
        let mut hit = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                hit = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let accuracy = ratio(self.tp + self.tn, self.total());
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            hit = true;
            0.0
        } else {
            harmonic(precision, recall)
        };
        Ok(MetricReport { accuracy, precision, recall, f1, zero_division_hit: hit })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub zero_division_hit: bool,
}

/// Accuracy, precision, recall and F1 with class 1 as the positive class.
pub fn prf_report(preds: &[Label], gold: &[Label]) -> Result<MetricReport, MetricsError> {
    ConfusionCounts::from_pairs(preds, gold)?.report()
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Cosine of the angle between `u` and `v`; 0 when either is the zero vector.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, MetricsError> {
    if u.len() != v.len() {
        return Err(MetricsError::LengthMismatch { left: u.len(), right: v.len() });
    }
    let (nu, nv) = (crate::linalg::norm(u), crate::linalg::norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((crate::linalg::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_overlap(overlap: usize, candidate: usize, reference: usize) -> Self {
        let frac = |den: usize| if den == 0 { 0.0 } else { overlap as f64 / den as f64 };
        let (precision, recall) = (frac(candidate), frac(reference));
        Self { precision, recall, f1: harmonic(precision, recall) }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand.iter().map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0))).sum();
    RougeScore::from_overlap(overlap, cand.values().sum(), refs.values().sum())
}

/// Longest-common-subsequence overlap.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeScore {
    let mut prev = vec![0usize; reference.len() + 1];
    let mut cur = vec![0usize; reference.len() + 1];
    for c in candidate {
        for (j, r) in reference.iter().enumerate() {
            cur[j + 1] = if c.as_ref() == r.as_ref() { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    RougeScore::from_overlap(prev[reference.len()], candidate.len(), reference.len())
}

/// Tokenisation used by the ROUGE and similarity helpers: no stop-word
/// removal, no stemming.
pub fn metric_tokens(text: &str) -> Vec<String> {
    preprocess(text, PreprocessConfig::PLAIN).tokens
}

fn mean_embedding(doc: &TokenDoc, table: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for v in doc.tokens.iter().filter_map(|t| table.get(t)) {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Cosine between mean in-table embeddings, falling back to TF-IDF cosine
/// fitted on the pair when either side has no in-table token.
pub fn response_similarity(candidate: &str, reference: &str, table: &EmbeddingTable) -> f64 {
    let a = TokenDoc::from_tokens(metric_tokens(candidate));
    let b = TokenDoc::from_tokens(metric_tokens(reference));
    if let (Some(u), Some(v)) = (mean_embedding(&a, table), mean_embedding(&b, table)) {
        return cosine(&u, &v).unwrap_or(0.0);
    }
    let pair = [a, b];
    let Ok(vocab) = fit_tfidf(&pair, usize::MAX) else {
        return 0.0;
    };
    // both vectors are L2-normalised or zero
    let (u, v) = (tfidf_transform(&vocab, &pair[0]), tfidf_transform(&vocab, &pair[1]));
    u.dot(&v).clamp(-1.0, 1.0)
}

/// One evaluation result row for CSV/JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    pub axis: String,
    pub axis_value: String,
    pub metric: String,
    pub value: f64,
}

impl ReportRow {
    /// Expands a report into accuracy/precision/recall/f1 rows.
    pub fn from_report(model_id: &str, axis: &str, axis_value: &str, r: &MetricReport) -> Vec<Self> {
        [("accuracy", r.accuracy), ("precision", r.precision), ("recall", r.recall), ("f1", r.f1)]
            .into_iter()
            .map(|(metric, value)| Self {
                model_id: model_id.to_string(),
                axis: axis.to_string(),
                axis_value: axis_value.to_string(),
                metric: metric.to_string(),
                value,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|b| Label::from_bool(*b == 1)).collect()
    }

    #[test]
    fn hand_counted_report() {
        let c = ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 6 };
        let r = c.report().unwrap();
        assert!((r.accuracy - 0.8).abs() < 1e-12);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(!r.zero_division_hit);
    }

    #[test]
    fn zero_division_flag() {
        let r = prf_report(&labels(&[0, 0]), &labels(&[0, 0])).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.accuracy), (0.0, 0.0, 0.0, 1.0));
        assert!(r.zero_division_hit);
        assert_eq!(prf_report(&[], &[]), Err(MetricsError::Empty));
        assert!(matches!(prf_report(&labels(&[1]), &[]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rouge_examples() {
        let r = rouge_n(&["the", "cat", "sat"], &["the", "cat", "sat", "on", "the", "mat"], 1);
        assert_eq!((r.precision, r.recall), (1.0, 0.5));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        let l = rouge_l(&["a", "b", "c", "d"], &["a", "c", "d", "b"]);
        assert_eq!((l.precision, l.recall, l.f1), (0.75, 0.75, 0.75));
        let empty: [&str; 0] = [];
        assert_eq!(rouge_l(&empty, &["a"]).f1, 0.0);
        assert_eq!(rouge_n(&["x"], &["y"], 1).f1, 0.0);
        assert_eq!(rouge_n(&["x"], &["x"], 2).f1, 0.0);
    }

    #[test]
    fn clipped_counts() {
        let r = rouge_n(&["the", "the", "the"], &["the", "cat"], 1);
        assert!((r.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.recall, 0.5);
    }

    #[test]
    fn similarity_paths() {
        let mut table = EmbeddingTable::new(2);
        table.insert("happy", vec![1.0, 0.0]);
        table.insert("sad", vec![0.0, 1.0]);
        assert!((response_similarity("happy", "happy", &table) - 1.0).abs() < 1e-12);
        assert_eq!(response_similarity("happy", "sad", &table), 0.0);
        assert!((response_similarity("zork blah", "blah zork", &table) - 1.0).abs() < 1e-12);
        assert_eq!(response_similarity("", "", &table), 0.0);
    }

    proptest! {
        #[test]
        fn report_is_permutation_invariant(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..40), rot in 0usize..40) {
            let preds: Vec<Label> = pairs.iter().map(|p| Label::from_bool(p.0 == 1)).collect();
            let gold: Vec<Label> = pairs.iter().map(|p| Label::from_bool(p.1 == 1)).collect();
            let k = rot % pairs.len();
            let (mut p2, mut g2) = (preds.clone(), gold.clone());
            p2.rotate_left(k);
            g2.rotate_left(k);
            let a = prf_report(&preds, &gold).unwrap();
            let b = prf_report(&p2, &g2).unwrap();
            prop_assert_eq!(a, b);
            for v in [a.accuracy, a.precision, a.recall, a.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(a.f1 <= (a.precision + a.recall) / 2.0 + 1e-12);
            if a.precision + a.recall > 0.0 {
                prop_assert!((a.f1 - 2.0 * a.precision * a.recall / (a.precision + a.recall)).abs() < 1e-12);
            }
        }

        #[test]
        fn rouge_swap_exchanges_precision_and_recall(
            a in prop::collection::vec("[a-d]", 0..12),
            b in prop::collection::vec("[a-d]", 0..12),
            n in 1usize..3,
        ) {
            let x = rouge_n(&a, &b, n);
            let y = rouge_n(&b, &a, n);
            prop_assert_eq!((x.precision, x.recall), (y.recall, y.precision));
            let lx = rouge_l(&a, &b);
            let ly = rouge_l(&b, &a);
            prop_assert_eq!((lx.precision, lx.recall), (ly.recall, ly.precision));
            for v in [x.precision, x.recall, x.f1, lx.precision, lx.recall, lx.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn cosine_is_bounded(u in prop::collection::vec(-5.0f64..5.0, 3), v in prop::collection::vec(-5.0f64..5.0, 3)) {
            let c = cosine(&u, &v).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}

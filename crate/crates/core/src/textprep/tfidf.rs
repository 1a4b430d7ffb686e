use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TextprepError, TokenDoc};

/// Token index with document frequencies.
///
/// Indices follow lexicographic order of the retained tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    df: Vec<usize>,
    total_docs: usize,
    cap: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    df: Vec<usize>,
    total_docs: usize,
    cap: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: r.tokens, df: r.df, total_docs: r.total_docs, cap: r.cap, index }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self { tokens: v.tokens, df: v.df, total_docs: v.total_docs, cap: v.cap }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.df[i])
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.total_docs as f64;
        ((1.0 + n) / (1.0 + self.df[index] as f64)).ln() + 1.0
    }

    /// SHA-256 over tokens, document frequencies and corpus size.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.total_docs.to_le_bytes());
        for (t, df) in self.tokens.iter().zip(&self.df) {
            h.update(t.as_bytes());
            h.update([0u8]);
            h.update(df.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Keeps the `cap` tokens with the highest document frequency, ties broken
/// lexicographically.
pub fn fit_tfidf(docs: &[TokenDoc], cap: usize) -> Result<Vocabulary, TextprepError> {
    if docs.is_empty() {
        return Err(TextprepError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        for t in doc.unique_tokens() {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    ranked.sort_by(|a, b| a.0.cmp(b.0));
    let repr = VocabularyRepr {
        tokens: ranked.iter().map(|(t, _)| t.to_string()).collect(),
        df: ranked.iter().map(|(_, d)| *d).collect(),
        total_docs: docs.len(),
        cap,
    };
    Ok(repr.into())
}

/// Sparse, L2-normalised TF-IDF weights sorted by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfidfVector {
    pub entries: Vec<(usize, f64)>,
}

impl TfidfVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &TfidfVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, wa) = self.entries[i];
            let (b, wb) = other.entries[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| dense[i] * w).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|(i, _)| *i)
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for &(i, w) in &self.entries {
            v[i] = w;
        }
        v
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        Self { entries: dense.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| (i, *w)).collect() }
    }
}

/// `tf · idf`, L2-normalised. Out-of-vocabulary tokens are ignored.
pub fn tfidf_transform(vocab: &Vocabulary, doc: &TokenDoc) -> TfidfVector {
    let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &doc.tokens {
        if let Some(i) = vocab.index_of(t) {
            *tf.entry(i).or_default() += 1;
        }
    }
    let mut entries: Vec<(usize, f64)> = tf.into_iter().map(|(i, c)| (i, c as f64 * vocab.idf(i))).collect();
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    TfidfVector { entries }
}

//! Text normalisation, tokenisation, stemming and feature extraction.

mod embeddings;
mod porter;
mod tfidf;

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embeddings::{embed_sequence, load_embeddings, EmbeddingTable};
pub use porter::porter_stem;
pub use tfidf::{fit_tfidf, tfidf_transform, TfidfVector, Vocabulary};

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("token {0:?} is not lowercase ASCII letters")]
    InvalidToken(String),
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("embedding header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    RowLengthMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid number {value:?}")]
    InvalidNumber { line: usize, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A preprocessed document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDoc {
    pub tokens: Vec<String>,
    pub original: String,
}

impl TokenDoc {
    /// Builds a document from already-processed tokens.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let original = tokens.join(" ");
        Self { tokens, original }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Distinct token types in first-occurrence order.
    pub fn unique_tokens(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.tokens.iter().filter(|t| seen.insert(t.as_str())).map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub stopwords: bool,
    pub stemming: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { stopwords: true, stemming: true }
    }
}

impl PreprocessConfig {
    /// Lowercase and punctuation stripping only.
    pub const PLAIN: Self = Self { stopwords: false, stemming: false };
}

static STOPWORDS_TXT: &str = include_str!("../../resources/stopwords.txt");

/// The bundled English stop-word list.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_TXT.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

/// Lowercase, strip punctuation, drop non-ASCII, split on whitespace, then
/// optionally remove stop words and stem.
///
/// ASCII whitespace separates tokens; every other ASCII character outside
/// `[a-z0-9]` is deleted. Tokens containing digits are never stemmed.
pub fn preprocess(text: &str, cfg: PreprocessConfig) -> TokenDoc {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
            cleaned.push(ch);
        } else if ch.is_ascii_whitespace() {
            cleaned.push(' ');
        }
    }
    let stop = stopwords();
    let tokens = cleaned
        .split_whitespace()
        .filter(|t| !(cfg.stopwords && stop.contains(t)))
        .map(|t| {
            if cfg.stemming && t.bytes().all(|b| b.is_ascii_lowercase()) {
                porter_stem(t).expect("token is lowercase ASCII")
            } else {
                t.to_string()
            }
        })
        .collect();
    TokenDoc { tokens, original: text.to_string() }
}

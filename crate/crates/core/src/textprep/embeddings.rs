use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{TextprepError, TokenDoc};
use crate::linalg::Matrix;

/// Static word vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    order: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, order: Vec::new(), vectors: HashMap::new() }
    }

    /// Inserts or replaces a row. Panics on a dimension mismatch.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "embedding row has the wrong dimension");
        let token = token.into();
        if self.vectors.insert(token.clone(), vector).is_none() {
            self.order.push(token);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    /// Renders the table in the `<count> <dim>` text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for t in &self.order {
            out.push_str(t);
            for v in &self.vectors[t] {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dim.to_le_bytes());
        for t in &self.order {
            h.update(t.as_bytes());
            h.update([0u8]);
            for v in &self.vectors[t] {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn parse(text: &str) -> Result<Self, TextprepError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| TextprepError::HeaderMismatch("missing header line".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (count, dim) = match fields.as_slice() {
            [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
                (Ok(c), Ok(d)) if d > 0 => (c, d),
                _ => return Err(TextprepError::HeaderMismatch(format!("bad header {header:?}"))),
            },
            _ => return Err(TextprepError::HeaderMismatch(format!("bad header {header:?}"))),
        };
        let mut table = Self::new(dim);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("line is non-empty");
            let values: Vec<&str> = parts.collect();
            if values.len() != dim {
                return Err(TextprepError::RowLengthMismatch { line: line_no, expected: dim, found: values.len() });
            }
            let row = values
                .iter()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| TextprepError::InvalidNumber { line: line_no, value: v.to_string() })
                })
                .collect::<Result<Vec<_>, _>>()?;
            table.insert(token, row);
        }
        if table.len() != count {
            return Err(TextprepError::HeaderMismatch(format!(
                "header declares {count} rows, file has {}",
                table.len()
            )));
        }
        Ok(table)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, TextprepError> {
    EmbeddingTable::parse(&std::fs::read_to_string(path)?)
}

/// Maps the first `max_len` tokens to their vectors; OOV rows and padding
/// are zero.
pub fn embed_sequence(doc: &TokenDoc, table: &EmbeddingTable, max_len: usize) -> Matrix {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut m = Matrix::zeros(max_len, table.dim());
    for (r, tok) in doc.tokens.iter().take(max_len).enumerate() {
        if let Some(v) = table.get(tok) {
            m.row_mut(r).copy_from_slice(v);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_table() {
        let t = EmbeddingTable::parse("2 3\nfoo 1 2 3\nbar 0.5 -1 0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("bar"), Some(&[0.5, -1.0, 0.0][..]));
    }

    #[test]
    fn short_row_is_rejected() {
        let err = EmbeddingTable::parse("2 3\nfoo 1 2 3\nbar 1 2\n").unwrap_err();
        assert!(matches!(err, TextprepError::RowLengthMismatch { line: 3, expected: 3, found: 2 }));
    }

    #[test]
    fn count_mismatch_is_header_error() {
        assert!(matches!(EmbeddingTable::parse("3 1\na 1\nb 2\n"), Err(TextprepError::HeaderMismatch(_))));
        assert!(matches!(EmbeddingTable::parse("x y\n"), Err(TextprepError::HeaderMismatch(_))));
        assert!(matches!(EmbeddingTable::parse(""), Err(TextprepError::HeaderMismatch(_))));
    }

    #[test]
    fn bad_number() {
        assert!(matches!(EmbeddingTable::parse("1 2\na 1 nope\n"), Err(TextprepError::InvalidNumber { line: 2, .. })));
    }

    #[test]
    fn text_round_trip() {
        let t = EmbeddingTable::parse("2 2\nb 0.1 0.2\na -3 4e-3\n").unwrap();
        let back = EmbeddingTable::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.tokens().collect::<Vec<_>>(), vec!["b", "a"]);
    }

    #[test]
    fn embed_pads_and_truncates() {
        let t = EmbeddingTable::parse("1 2\nx 1 2\n").unwrap();
        let empty = embed_sequence(&TokenDoc::from_tokens(Vec::<String>::new()), &t, 3);
        assert_eq!(empty.shape(), (3, 2));
        assert!(empty.as_slice().iter().all(|v| *v == 0.0));

        let long = TokenDoc::from_tokens(["x", "q", "x", "x"]);
        let m = embed_sequence(&long, &t, 2);
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.row(0), &[1.0, 2.0]);
        assert_eq!(m.row(1), &[0.0, 0.0]);
    }
}

//! Posts, datasets, stratified splitting and pseudo-labeling.

mod pseudo;
mod split;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pseudo::{pseudo_label, PseudoLabelConfig, PseudoLabelOutcome, RoundStats, Teacher};
pub use split::{stratified_split, SplitSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate post id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("post {0:?} has no label")]
    UnlabeledPost(String),
    #[error("class {label} has {count} posts; at least 3 are required")]
    ClassTooSmall { label: u8, count: usize },
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("invalid pseudo-label config: {0}")]
    InvalidPseudoLabelConfig(String),
    #[error("split refers to unknown post {0:?}")]
    UnknownId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary depression label; serialised as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NotDepressed,
    Depressed,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NotDepressed, Label::Depressed];

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_bool(depressed: bool) -> Self {
        if depressed {
            Label::Depressed
        } else {
            Label::NotDepressed
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Depressed
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::NotDepressed),
            1 => Ok(Label::Depressed),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ClinicalTranscript,
    #[default]
    Forum,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_id: Option<String>,
}

impl Post {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<Label>) -> Self {
        Self { id: id.into(), text: text.into(), label, source: Source::default(), author_id: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub posts: Vec<Post>,
    pub split: Option<BTreeMap<String, Partition>>,
}

#[derive(Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    partition: Partition,
}

impl Dataset {
    /// Validates id uniqueness and non-empty text.
    pub fn new(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, p) in posts.iter().enumerate() {
            if p.text.trim().is_empty() {
                return Err(CorpusError::MalformedLine { line: i + 1, reason: "empty text".into() });
            }
            if !seen.insert(p.id.as_str()) {
                return Err(CorpusError::DuplicateId { id: p.id.clone(), line: i + 1 });
            }
        }
        Ok(Self { posts, split: None })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.posts.iter().filter(|p| p.label.is_some()).count()
    }

    pub fn get(&self, id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.id == id)
    }

    /// Posts assigned to `part`, in dataset order. Empty when unsplit.
    pub fn partition(&self, part: Partition) -> Vec<&Post> {
        match &self.split {
            None => Vec::new(),
            Some(split) => self.posts.iter().filter(|p| split.get(&p.id) == Some(&part)).collect(),
        }
    }

    /// Attaches a split, checking every id exists.
    pub fn with_split(mut self, split: BTreeMap<String, Partition>) -> Result<Self, CorpusError> {
        let ids: HashSet<&str> = self.posts.iter().map(|p| p.id.as_str()).collect();
        if let Some(bad) = split.keys().find(|id| !ids.contains(id.as_str())) {
            return Err(CorpusError::UnknownId(bad.clone()));
        }
        self.split = Some(split);
        Ok(self)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for p in &self.posts {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes `{id, partition}` rows in dataset order.
    pub fn write_split_manifest(&self, mut w: impl Write) -> std::io::Result<()> {
        let Some(split) = &self.split else { return Ok(()) };
        for p in &self.posts {
            if let Some(part) = split.get(&p.id) {
                serde_json::to_writer(&mut w, &ManifestRow { id: p.id.clone(), partition: *part })?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

pub fn read_split_manifest(r: impl BufRead) -> Result<BTreeMap<String, Partition>, CorpusError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedLine { line: i + 1, reason: e.to_string() })?;
        out.insert(row.id, row.partition);
    }
    Ok(out)
}

pub fn load_split_manifest(path: impl AsRef<Path>) -> Result<BTreeMap<String, Partition>, CorpusError> {
    read_split_manifest(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Parses one JSON object per line. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn read_jsonl(r: impl BufRead) -> Result<Dataset, CorpusError> {
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let post: Post = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedLine { line: line_no, reason: e.to_string() })?;
        if post.text.trim().is_empty() {
            return Err(CorpusError::MalformedLine { line: line_no, reason: "empty text".into() });
        }
        if !seen.insert(post.id.clone()) {
            return Err(CorpusError::DuplicateId { id: post.id, line: line_no });
        }
        posts.push(post);
    }
    Ok(Dataset { posts, split: None })
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset, CorpusError> {
        read_jsonl(s.as_bytes())
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse("").unwrap().len(), 0);
    }

    #[test]
    fn three_line_fixture() {
        let ds = parse(
            r#"{"id":"a","text":"I can't sleep","label":1}
{"id":"b","text":"great hike today","label":0,"source":"synthetic"}
{"id":"c","text":"unknown mood","author_id":"u9"}
"#,
        )
        .unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labeled_count(), 2);
        assert_eq!(ds.posts[1].source, Source::Synthetic);
        assert_eq!(ds.posts[2].author_id.as_deref(), Some("u9"));
    }

    #[test]
    fn missing_text_names_line() {
        let err = parse("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }), "{err}");
    }

    #[test]
    fn non_json_and_bad_label() {
        assert!(matches!(parse("nope"), Err(CorpusError::MalformedLine { line: 1, .. })));
        assert!(matches!(parse(r#"{"id":"a","text":"x","label":2}"#), Err(CorpusError::MalformedLine { line: 1, .. })));
        assert!(matches!(parse(r#"{"id":"a","text":"   "}"#), Err(CorpusError::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn duplicate_ids() {
        let err = parse("{\"id\":\"a\",\"text\":\"x\"}\n\n{\"id\":\"a\",\"text\":\"y\"}\n").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 3, .. }));
    }

    #[test]
    fn manifest_round_trip() {
        let ds = Dataset::new(vec![Post::new("a", "x", Some(Label::Depressed)), Post::new("b", "y", None)]).unwrap();
        let split: BTreeMap<_, _> = [("a".to_string(), Partition::Train), ("b".to_string(), Partition::Test)].into();
        let ds = ds.with_split(split.clone()).unwrap();
        let mut buf = Vec::new();
        ds.write_split_manifest(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"id\":\"a\",\"partition\":\"train\"}\n{\"id\":\"b\",\"partition\":\"test\"}\n"
        );
        assert_eq!(read_split_manifest(&buf[..]).unwrap(), split);
    }

    #[test]
    fn split_with_unknown_id_is_rejected() {
        let ds = Dataset::new(vec![Post::new("a", "x", None)]).unwrap();
        let split: BTreeMap<_, _> = [("zz".to_string(), Partition::Train)].into();
        assert!(matches!(ds.with_split(split), Err(CorpusError::UnknownId(_))));
    }
}

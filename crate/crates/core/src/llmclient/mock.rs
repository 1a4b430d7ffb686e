use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, CompletionResponse, LlmBackend, LlmError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchRule {
    /// 1-based call index.
    Nth(usize),
    /// Substring of the newline-joined message contents.
    Contains(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub rule: MatchRule,
    pub response: String,
}

impl ScriptEntry {
    pub fn nth(n: usize, response: impl Into<String>) -> Self {
        Self { rule: MatchRule::Nth(n), response: response.into() }
    }

    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self { rule: MatchRule::Contains(needle.into()), response: response.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unmatched {
    Error,
    Default(String),
}

/// Scripted backend. The call counter is atomic; `nth` entries are checked
/// before `contains` entries.
#[derive(Debug)]
pub struct MockBackend {
    entries: Vec<ScriptEntry>,
    unmatched: Unmatched,
    calls: AtomicUsize,
    log: Mutex<Vec<CompletionRequest>>,
}

impl MockBackend {
    pub fn new(entries: Vec<ScriptEntry>, unmatched: Unmatched) -> Self {
        Self { entries, unmatched, calls: AtomicUsize::new(0), log: Mutex::new(Vec::new()) }
    }

    /// Replies with `responses[i]` on call `i + 1`; errors afterwards.
    pub fn sequence<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        let entries = responses.into_iter().enumerate().map(|(i, r)| ScriptEntry::nth(i + 1, r)).collect();
        Self::new(entries, Unmatched::Error)
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Requests received so far, in call order.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    fn lookup(&self, call: usize, req: &CompletionRequest) -> Option<&str> {
        let nth = self.entries.iter().find(|e| e.rule == MatchRule::Nth(call));
        nth.or_else(|| {
            let text = req.joined_content();
            self.entries.iter().find(|e| matches!(&e.rule, MatchRule::Contains(s) if text.contains(s.as_str())))
        })
        .map(|e| e.response.as_str())
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        let mut log = self.log.lock().expect("mock log poisoned");
        let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        log.push(req.clone());
        drop(log);
        let content = match (self.lookup(call, req), &self.unmatched) {
            (Some(r), _) => r.to_string(),
            (None, Unmatched::Default(d)) => d.clone(),
            (None, Unmatched::Error) => return Err(LlmError::UnmatchedRequest { call }),
        };
        let prompt_tokens = req.messages.iter().map(|m| m.content.split_whitespace().count() as u64).sum();
        let completion_tokens = content.split_whitespace().count() as u64;
        Ok(CompletionResponse { content, prompt_tokens, completion_tokens, latency_ms: 0 })
    }
}

/// Parses a JSONL script; blank lines are skipped.
pub fn parse_mock_script(text: &str) -> Result<Vec<ScriptEntry>, LlmError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry =
            serde_json::from_str(line).map_err(|e| LlmError::MalformedScript { line: i + 1, reason: e.to_string() })?;
        if entry.rule == MatchRule::Nth(0) {
            return Err(LlmError::MalformedScript { line: i + 1, reason: "nth is 1-based".into() });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn load_mock_script(path: impl AsRef<Path>) -> Result<Vec<ScriptEntry>, LlmError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| LlmError::MalformedScript { line: 0, reason: format!("{}: {e}", path.display()) })?;
    parse_mock_script(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::ChatMessage;

    fn req(text: &str) -> CompletionRequest {
        CompletionRequest::new("mock", vec![ChatMessage::user(text)])
    }

    #[test]
    fn nth_entries_in_order_then_unmatched() {
        let m = MockBackend::sequence(["one", "two", "three"]);
        for want in ["one", "two", "three"] {
            assert_eq!(m.complete(&req("x")).unwrap().content, want);
        }
        assert_eq!(m.complete(&req("x")), Err(LlmError::UnmatchedRequest { call: 4 }));
        assert_eq!(m.call_count(), 4);
    }

    #[test]
    fn contains_and_default() {
        let script = "{\"match\":{\"contains\":\"Behavioral Activation\"},\"response\":\"Vote: 9\"}\n\n\
                      {\"match\":{\"nth\":2},\"response\":\"second\"}\n";
        let m = MockBackend::new(parse_mock_script(script).unwrap(), Unmatched::Default("Vote: 0".into()));
        assert_eq!(m.complete(&req("rate Behavioral Activation")).unwrap().content, "Vote: 9");
        assert_eq!(m.complete(&req("rate Behavioral Activation")).unwrap().content, "second");
        assert_eq!(m.complete(&req("other")).unwrap().content, "Vote: 0");
        assert_eq!(m.requests().len(), 3);
    }

    #[test]
    fn malformed_script() {
        assert!(matches!(parse_mock_script("{\"match\":{}}"), Err(LlmError::MalformedScript { line: 1, .. })));
        assert!(matches!(
            parse_mock_script("{\"match\":{\"nth\":0},\"response\":\"x\"}"),
            Err(LlmError::MalformedScript { .. })
        ));
    }

    #[test]
    fn counter_is_shared_across_threads() {
        let m = std::sync::Arc::new(MockBackend::new(vec![], Unmatched::Default("ok".into())));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let m = m.clone();
                std::thread::spawn(move || m.complete(&req("x")).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(m.call_count(), 8);
    }
}

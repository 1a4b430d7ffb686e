//! LLM completion backends: a scripted mock and a chat-completions HTTP
//! client.

mod http;
mod mock;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{backoff_delay, HttpBackend, HttpResponse, Transport, TransportError, UreqTransport};
pub use mock::{load_mock_script, parse_mock_script, MatchRule, MockBackend, ScriptEntry, Unmatched};

pub const DEFAULT_AUTH_ENV: &str = "ILLUMINATE_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("backend returned HTTP {0}")]
    HttpStatus(u16),
    #[error("unexpected response body: {0}")]
    WireParseError(String),
    #[error("environment variable {0} is not set")]
    MissingAuth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no script entry matches call {call}")]
    UnmatchedRequest { call: usize },
    #[error("mock script line {line}: {reason}")]
    MalformedScript { line: usize, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self { model_id: model_id.into(), messages, temperature: 0.0, max_tokens: 512, seed: None }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("messages must not be empty".into()));
        }
        if let Some(m) = self.messages.iter().find(|m| m.role != Role::System && m.content.is_empty()) {
            return Err(LlmError::InvalidRequest(format!("empty {:?} message", m.role)));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// All message contents joined by newlines.
    pub fn joined_content(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

/// A completion backend; implementations are shareable across threads.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub auth_env_var: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub model_id: String,
    /// JSONL script for the mock backend.
    pub mock_script: Option<PathBuf>,
    /// Reply for unmatched mock requests; unmatched calls error when absent.
    pub mock_default: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            auth_env_var: DEFAULT_AUTH_ENV.into(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_base_ms: 500,
            model_id: "gpt-4".into(),
            mock_script: None,
            mock_default: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.kind == BackendKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(LlmError::InvalidConfig("http backend requires an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn LlmBackend>, LlmError> {
        self.validate()?;
        let unmatched = match &self.mock_default {
            Some(s) => Unmatched::Default(s.clone()),
            None => Unmatched::Error,
        };
        Ok(match self.kind {
            BackendKind::Mock => {
                let entries = match &self.mock_script {
                    Some(path) => load_mock_script(path)?,
                    None => Vec::new(),
                };
                Arc::new(MockBackend::new(entries, unmatched))
            }
            BackendKind::Http => Arc::new(HttpBackend::from_config(self)),
        })
    }
}

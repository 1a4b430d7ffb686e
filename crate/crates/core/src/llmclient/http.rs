use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{BackendConfig, CompletionRequest, CompletionResponse, LlmBackend, LlmError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// One HTTP POST. Non-2xx statuses are returned, not raised.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let classify = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
            other => TransportError::Other(other.to_string()),
        };
        let mut resp = req.send(body).map_err(classify)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(classify)?;
        Ok(HttpResponse { status, body })
    }
}

/// `base · 2^attempt`, scaled by `1 + jitter` with `jitter ∈ [-0.2, 0.2]`.
pub fn backoff_delay(base: Duration, attempt: u32, jitter: f64) -> Duration {
    let factor = 2f64.powi(attempt as i32) * (1.0 + jitter.clamp(-0.2, 0.2));
    base.mul_f64(factor)
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Chat-completions client: POST `{endpoint}/chat/completions` with a
/// bearer token read from the configured environment variable.
pub struct HttpBackend {
    endpoint: String,
    auth_env_var: String,
    api_key: Option<String>,
    timeout: Duration,
    max_retries: u32,
    backoff_base: Duration,
    transport: Arc<dyn Transport>,
    sleeper: Sleeper,
    jitter: Mutex<ChaCha8Rng>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("auth_env_var", &self.auth_env_var)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn from_config(cfg: &BackendConfig) -> Self {
        Self {
            endpoint: cfg.endpoint.clone().unwrap_or_default().trim_end_matches('/').to_string(),
            auth_env_var: cfg.auth_env_var.clone(),
            api_key: None,
            timeout: Duration::from_millis(cfg.timeout_ms),
            max_retries: cfg.max_retries,
            backoff_base: Duration::from_millis(cfg.backoff_base_ms),
            transport: Arc::new(UreqTransport),
            sleeper: Arc::new(std::thread::sleep),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
        }
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    /// Replaces `thread::sleep` between retries.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    /// Uses `key` instead of reading the environment.
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    fn api_key(&self) -> Result<String, LlmError> {
        if let Some(k) = &self.api_key {
            return Ok(k.clone());
        }
        std::env::var(&self.auth_env_var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::MissingAuth(self.auth_env_var.clone()))
    }

    /// The exact request body sent on every attempt.
    pub fn request_body(req: &CompletionRequest) -> String {
        let mut body = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body.to_string()
    }

    pub fn parse_response(body: &str) -> Result<(String, u64, u64), LlmError> {
        let v: Value = serde_json::from_str(body).map_err(|e| LlmError::WireParseError(e.to_string()))?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::WireParseError("missing choices[0].message.content".into()))?;
        let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
        Ok((content.to_string(), usage("prompt_tokens"), usage("completion_tokens")))
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        let key = self.api_key()?;
        let url = format!("{}/chat/completions", self.endpoint);
        let headers = vec![
            ("Authorization".to_string(), format!("Bearer {key}")),
            ("Content-Type".to_string(), "application/json".to_string()),
        ];
        let body = Self::request_body(req);
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            let err = match self.transport.post(&url, &headers, &body, self.timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    let (content, prompt_tokens, completion_tokens) = Self::parse_response(&resp.body)?;
                    let latency_ms = started.elapsed().as_millis() as u64;
                    return Ok(CompletionResponse { content, prompt_tokens, completion_tokens, latency_ms });
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => LlmError::HttpStatus(resp.status),
                Ok(resp) => return Err(LlmError::HttpStatus(resp.status)),
                Err(TransportError::Timeout) => LlmError::Timeout,
                Err(TransportError::Other(e)) => return Err(LlmError::Transport(e)),
            };
            if attempt >= self.max_retries {
                return Err(err);
            }
            let jitter = self.jitter.lock().expect("jitter rng poisoned").random_range(-0.2..=0.2);
            tracing::warn!(attempt, error = %err, "retrying completion request");
            (self.sleeper)(backoff_delay(self.backoff_base, attempt, jitter));
            attempt += 1;
        }
    }
}

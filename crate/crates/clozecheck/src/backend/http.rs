//! Blocking HTTP backend for OpenAI-compatible `/chat/completions`
//! endpoints, with bounded retries for transient failures.

use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::wire::{CompletionRequest, CompletionResponse};
use super::{Backend, BackendError};

/// Retry schedule for transient failures (transport errors, HTTP 429/5xx).
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total attempts, including the first (so 5 = 1 try + 4 retries).
    pub max_attempts: u32,
    /// First backoff delay; doubles per retry.
    pub base_delay: Duration,
    /// Upper bound on any single delay, server hints included.
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): the server's
    /// `Retry-After` hint when given, otherwise exponential backoff with
    /// jitter; always capped at `max_delay`.
    fn delay(&self, retry: u32, server_hint: Option<Duration>) -> Duration {
        if let Some(hint) = server_hint {
            return hint.min(self.max_delay);
        }
        let exp = self.base_delay.saturating_mul(1 << (retry - 1).min(16));
        let jitter_cap = self.base_delay.as_millis() as u64 / 2;
        let jitter = if jitter_cap == 0 {
            Duration::ZERO
        } else {
            Duration::from_millis(rand::thread_rng().gen_range(0..=jitter_cap))
        };
        exp.saturating_add(jitter).min(self.max_delay)
    }
}

/// Endpoint configuration.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL up to (not including) `/chat/completions`,
    /// e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Bearer credential; omitted entirely when `None` (local endpoints).
    pub api_key: Option<String>,
    /// Per-attempt request timeout.
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    #[must_use]
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }
}

/// A `Backend` speaking the OpenAI-compatible chat-completions protocol.
pub struct HttpBackend {
    config: HttpConfig,
    http: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.base_url.is_empty() {
            return Err(BackendError::InvalidRequest("empty base URL".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(format!("build HTTP client: {e}")))?;
        Ok(Self { config, http })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    /// One HTTP attempt. Transient failures come back with an optional
    /// server-suggested retry delay.
    fn attempt(
        &self,
        url: &str,
        body: &str,
    ) -> Result<CompletionResponse, (BackendError, Option<Duration>)> {
        let mut builder = self
            .http
            .post(url)
            .header("Content-Type", "application/json")
            .body(body.to_owned());
        if let Some(key) = &self.config.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let response = builder
            .send()
            .map_err(|e| (BackendError::Transport(e.to_string()), None))?;

        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = response
            .text()
            .map_err(|e| (BackendError::Transport(format!("read body: {e}")), None))?;
        if !(200..300).contains(&status) {
            let mut message = text.trim().to_string();
            message.truncate(500);
            return Err((BackendError::Http { status, message }, retry_after));
        }
        parse_completion_body(&text).map_err(|e| (e, None))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let url = self.endpoint();
        // The body is built once so every retry sends identical bytes.
        let body = build_body(request).to_string();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&url, &body) {
                Ok(response) => return Ok(response),
                Err((error, hint)) => {
                    if !error.is_retryable() || attempt >= self.config.retry.max_attempts {
                        return Err(error);
                    }
                    let delay = self.config.retry.delay(attempt, hint);
                    log::warn!(
                        "completion attempt {attempt}/{} failed ({error}); retrying in {delay:?}",
                        self.config.retry.max_attempts
                    );
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

/// Request body in the chat-completions wire shape. `seed` is omitted for
/// seedless templates; `logprobs` requested only when token probabilities
/// are wanted.
fn build_body(request: &CompletionRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
        .collect();
    let mut body = json!({
        "model": request.model,
        "messages": messages,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "n": request.n,
    });
    let map = body.as_object_mut().expect("body is an object");
    if let Some(seed) = request.seed {
        map.insert("seed".into(), json!(seed));
    }
    if request.want_token_probs {
        map.insert("logprobs".into(), json!(true));
    }
    body
}

/// Extracts choice texts and (when every choice carries them) the
/// probability of each choice's first token, `exp(logprob)` clamped to 1.
fn parse_completion_body(text: &str) -> Result<CompletionResponse, BackendError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| BackendError::Parse(format!("response is not JSON: {e}")))?;
    let choices = value
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Parse("no choices array".into()))?;
    if choices.is_empty() {
        return Err(BackendError::Parse("empty choices array".into()));
    }
    let mut texts = Vec::with_capacity(choices.len());
    let mut probs = Vec::with_capacity(choices.len());
    let mut all_probs = true;
    for (i, choice) in choices.iter().enumerate() {
        let content = choice
            .get("message")
            .and_then(|m| m.get("content"))
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Parse(format!("choice {i} has no message content")))?;
        texts.push(content.to_string());
        match choice
            .get("logprobs")
            .and_then(|l| l.get("content"))
            .and_then(Value::as_array)
            .and_then(|tokens| tokens.first())
            .and_then(|t| t.get("logprob"))
            .and_then(Value::as_f64)
        {
            Some(logprob) => probs.push(logprob.exp().min(1.0)),
            None => all_probs = false,
        }
    }
    Ok(CompletionResponse {
        choices: texts,
        first_token_probs: if all_probs { Some(probs) } else { None },
    })
}

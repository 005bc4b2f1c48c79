//! Wire-level types for chat-completion requests and responses, plus the
//! canonical request digest used for caching and transcript replay.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendError;

/// Chat message author role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    /// Lowercase wire name.
    #[must_use]
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    #[must_use]
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A fully-specified completion request.
///
/// `want_token_probs` asks the server for per-token probabilities; it does
/// not change the sampled text, so it is excluded from the cache digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    /// Deterministic-sampling seed; absent where a template defines none.
    pub seed: Option<i64>,
    /// Number of simultaneous completions to sample.
    pub n: u32,
    #[serde(default)]
    pub want_token_probs: bool,
}

/// Digest payload: the fields that determine the sampled text, in fixed
/// order. Serialized compactly; sha-256 of those bytes is the cache key.
#[derive(Serialize)]
struct DigestView<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
    seed: Option<i64>,
    n: u32,
}

impl CompletionRequest {
    /// Checks ranges the downstream API would reject.
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.model.is_empty() {
            return Err(BackendError::InvalidRequest("empty model name".into()));
        }
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("no messages".into()));
        }
        if self.messages[0].role != Role::System {
            return Err(BackendError::InvalidRequest(
                "first message must have the system role".into(),
            ));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !self.top_p.is_finite() || !(0.0..=1.0).contains(&self.top_p) {
            return Err(BackendError::InvalidRequest(format!(
                "top_p {} outside [0, 1]",
                self.top_p
            )));
        }
        if self.n == 0 || self.n > 128 {
            return Err(BackendError::InvalidRequest(format!(
                "n {} outside [1, 128]",
                self.n
            )));
        }
        Ok(())
    }

    /// Canonical sha-256 hex digest over (model, messages, temperature,
    /// top_p, seed, n). Identical requests always collide; changing any of
    /// those fields changes the digest. `want_token_probs` is excluded.
    #[must_use]
    pub fn digest(&self) -> String {
        let view = DigestView {
            model: &self.model,
            messages: &self.messages,
            temperature: self.temperature,
            top_p: self.top_p,
            seed: self.seed,
            n: self.n,
        };
        let canonical = serde_json::to_string(&view).expect("digest view serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// A completion result: one text per requested choice, plus (optionally)
/// the probability of each choice's first sampled token.
///
/// `first_token_probs` is `Some` only when every choice carried token
/// probabilities; partial data degrades to `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub choices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_token_probs: Option<Vec<f64>>,
}

impl CompletionResponse {
    #[must_use]
    pub fn text(choices: Vec<String>) -> Self {
        Self {
            choices,
            first_token_probs: None,
        }
    }
}

//! Chat-completion gateway: provider abstraction, retries, rate limiting,
//! a content-addressed response cache and a scriptable mock provider.

mod cache;
mod gateway;
mod mock;
mod openai;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, CacheStats, CacheStore};
pub use gateway::{Gateway, RateLimiter, RetryPolicy};
pub use mock::{MockFile, MockProvider, MockResponse, MockRule, PromptMatcher};
pub use openai::{OpenAiProvider, WirePayload};

/// Sampling configuration of one model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    /// Base URL of an OpenAI-compatible API, or `"mock"`.
    pub endpoint: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Passed through to the provider untouched (top_p, penalties, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn default_temperature() -> f64 {
    0.2
}

fn default_max_tokens() -> u32 {
    3000
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            endpoint: endpoint.into(),
            temperature: default_temperature(),
            max_output_tokens: default_max_tokens(),
            api_key_env: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn mock(model_id: impl Into<String>) -> Self {
        Self::new(model_id, "mock")
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model_id.trim().is_empty() {
            return Err("model_id is empty".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: ModelConfig,
    pub messages: Vec<ChatMessage>,
    /// Attempt index; distinct attempts never share a cached sample.
    pub attempt_seed: u64,
    pub repeat_index: u32,
    /// Separates otherwise identical samples drawn for different runs of
    /// the same prompt (e.g. a pure strategy and the matching hybrid half).
    pub namespace: String,
}

impl ChatRequest {
    pub fn new(model: ModelConfig, messages: Vec<ChatMessage>) -> Self {
        Self {
            model,
            messages,
            attempt_seed: 0,
            repeat_index: 0,
            namespace: String::new(),
        }
    }

    pub fn with_attempt(mut self, attempt_seed: u64, repeat_index: u32) -> Self {
        self.attempt_seed = attempt_seed;
        self.repeat_index = repeat_index;
        self
    }

    pub fn with_namespace(mut self, namespace: impl Into<String>) -> Self {
        self.namespace = namespace.into();
        self
    }

    /// All message contents joined, as seen by prompt matchers.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        self.model.validate().map_err(GatewayError::InvalidRequest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Completion {
    pub fn stop(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            usage: Usage::default(),
            latency_ms: 0,
            diagnostic: None,
        }
    }

    pub fn error(diagnostic: impl Into<String>) -> Self {
        Self {
            text: String::new(),
            finish_reason: FinishReason::Error,
            usage: Usage::default(),
            latency_ms: 0,
            diagnostic: Some(diagnostic.into()),
        }
    }

    pub fn latency(&self) -> Duration {
        Duration::from_millis(self.latency_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("authentication failed (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited (HTTP 429)")]
    RateLimited { retry_after: Option<Duration> },
    #[error("rate limit still exceeded after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing API key: environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("mock provider: {0}")]
    Mock(String),
}

impl GatewayError {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Auth { .. } => "auth",
            GatewayError::RateLimited { .. } => "rate_limited",
            GatewayError::RateLimitExhausted { .. } => "rate_limit_exhausted",
            GatewayError::Timeout => "timeout",
            GatewayError::Http { .. } => "http",
            GatewayError::Transport(_) => "transport",
            GatewayError::Malformed(_) => "malformed",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::MissingApiKey(_) => "missing_api_key",
            GatewayError::Mock(_) => "mock",
        }
    }

    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::RateLimited { .. } | GatewayError::Timeout | GatewayError::Transport(_) => true,
            GatewayError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }

    /// Errors that make every further request pointless; runs abort on
    /// these instead of burning attempts.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::Auth { .. } | GatewayError::RateLimitExhausted { .. } | GatewayError::MissingApiKey(_)
        )
    }
}

/// A chat-completion backend. Implementations perform exactly one
/// request per call; retries live in [`Gateway`].
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError>;
}

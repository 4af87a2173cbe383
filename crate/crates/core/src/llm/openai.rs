use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatRequest, Completion, FinishReason, GatewayError, Provider, Usage};

/// Request body of an OpenAI-style chat completion.
#[derive(Debug, Serialize)]
pub struct WirePayload<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(flatten)]
    pub extra: &'a BTreeMap<String, serde_json::Value>,
}

impl<'a> WirePayload<'a> {
    pub fn from_request(request: &'a ChatRequest) -> Self {
        Self {
            model: &request.model.model_id,
            messages: &request.messages,
            temperature: request.model.temperature,
            max_tokens: request.model.max_output_tokens,
            extra: &request.model.extra,
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Client for OpenAI-compatible `/chat/completions` endpoints.
pub struct OpenAiProvider {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl OpenAiProvider {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(Self { client, url, api_key })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn retry_after(headers: &reqwest::header::HeaderMap) -> Option<Duration> {
    headers
        .get(reqwest::header::RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|s| s.is_finite() && *s >= 0.0)
        .map(Duration::from_secs_f64)
}

fn is_context_overflow(body: &str) -> bool {
    body.contains("context_length_exceeded") || body.contains("maximum context length")
}

impl Provider for OpenAiProvider {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let body = serde_json::to_vec(&WirePayload::from_request(request)).expect("payload serializes");
        let mut builder = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let started = Instant::now();
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let wait = retry_after(response.headers());
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(GatewayError::Auth { status, message: text }),
            429 => return Err(GatewayError::RateLimited { retry_after: wait }),
            400 | 413 if is_context_overflow(&text) => {
                return Ok(Completion::error(format!("context length exceeded: {text}")));
            }
            _ => return Err(GatewayError::Http { status, body: text }),
        }
        let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Malformed("no choices".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("stop") | None => FinishReason::Stop,
            Some(_) => FinishReason::Stop,
        };
        let usage = parsed
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        let Some(content) = choice.message.content else {
            return Ok(Completion {
                usage,
                latency_ms: started.elapsed().as_millis() as u64,
                ..Completion::error("response carried no message content")
            });
        };
        Ok(Completion {
            text: content,
            finish_reason,
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
            diagnostic: None,
        })
    }
}

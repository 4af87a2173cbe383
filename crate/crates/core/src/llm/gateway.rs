use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CacheKey, CacheStore, ChatRequest, Completion, FinishReason, GatewayError, ModelConfig, OpenAiProvider, Provider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    fn delay(&self, retry: u32, hint: Option<Duration>) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << retry.min(20));
        let backoff = Duration::from_millis(exp.min(self.max_delay_ms));
        hint.map_or(backoff, |h| h.min(Duration::from_millis(self.max_delay_ms)).max(backoff))
    }
}

/// Spaces requests at least `60 / requests_per_minute` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        Self {
            interval: Duration::from_secs_f64(60.0 / requests.max(1) as f64),
            next_slot: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + self.interval);
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Routes requests to providers by endpoint and adds retries, rate
/// limiting and caching. Safe to share between worker threads.
pub struct Gateway {
    providers: HashMap<String, Arc<dyn Provider>>,
    cache: Option<CacheStore>,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    provider_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(retry: RetryPolicy) -> Self {
        Self {
            providers: HashMap::new(),
            cache: None,
            retry,
            limiter: None,
            provider_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    /// A gateway serving `"mock"` endpoints from `mock`, without retries.
    pub fn with_mock(mock: Arc<dyn Provider>) -> Self {
        let mut g = Self::new(RetryPolicy::none());
        g.register("mock", mock);
        g
    }

    pub fn register(&mut self, endpoint: impl Into<String>, provider: Arc<dyn Provider>) {
        self.providers.insert(endpoint.into(), provider);
    }

    /// Registers an HTTP provider for `model` unless its endpoint already
    /// has one. The API key is read from the environment variable named in
    /// the model config.
    pub fn register_http(&mut self, model: &ModelConfig, timeout: Duration) -> Result<(), GatewayError> {
        if model.is_mock() || self.providers.contains_key(&model.endpoint) {
            return Ok(());
        }
        let key = match &model.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let provider = OpenAiProvider::new(&model.endpoint, key, timeout)?;
        self.providers.insert(model.endpoint.clone(), Arc::new(provider));
        Ok(())
    }

    pub fn with_cache(mut self, store: CacheStore) -> Self {
        self.cache = Some(store);
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(RateLimiter::per_minute(requests_per_minute));
        self
    }

    pub fn cache(&self) -> Option<&CacheStore> {
        self.cache.as_ref()
    }

    /// Requests that reached a provider (including retries).
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    /// Sends the request, retrying transient failures with exponential
    /// backoff. The provider text is returned verbatim.
    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let provider = self
            .providers
            .get(&request.model.endpoint)
            .ok_or_else(|| GatewayError::InvalidRequest(format!("no provider for endpoint `{}`", request.model.endpoint)))?;
        let mut retry = 0;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            match provider.complete(request) {
                Ok(c) => return Ok(c),
                Err(e) if e.is_transient() && retry < self.retry.max_retries => {
                    let hint = match &e {
                        GatewayError::RateLimited { retry_after } => *retry_after,
                        _ => None,
                    };
                    let delay = self.retry.delay(retry, hint);
                    tracing::debug!(error = %e, retry, ?delay, "transient provider failure, retrying");
                    thread::sleep(delay);
                    retry += 1;
                }
                Err(GatewayError::RateLimited { .. }) => {
                    return Err(GatewayError::RateLimitExhausted { attempts: retry + 1 })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Like [`Gateway::complete`], but serves repeated requests from the
    /// cache. Error completions are never cached.
    pub fn cached_complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let Some(store) = &self.cache else {
            return self.complete(request);
        };
        let key = CacheKey::of(request);
        if let Some(hit) = store.get(&key) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let completion = self.complete(request)?;
        if completion.finish_reason != FinishReason::Error {
            if let Err(e) = store.put(&key, &completion) {
                tracing::warn!(error = %e, "failed to write cache entry");
            }
        }
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, MockProvider, MockResponse, PromptMatcher};

    fn req(prompt: &str) -> ChatRequest {
        ChatRequest::new(ModelConfig::mock("m"), vec![ChatMessage::user(prompt)])
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_retries: 2,
            base_delay_ms: 1,
            max_delay_ms: 2,
        }
    }

    #[test]
    fn transient_errors_are_retried_then_exhausted() {
        let mock = Arc::new(MockProvider::new());
        mock.set_default(MockResponse::Error {
            error: "rate_limit".into(),
        });
        let mut g = Gateway::new(fast_retry());
        g.register("mock", mock.clone());
        let err = g.complete(&req("x")).unwrap_err();
        assert_eq!(err, GatewayError::RateLimitExhausted { attempts: 3 });
        assert!(err.is_fatal());
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let mock = Arc::new(MockProvider::new());
        mock.set_default(MockResponse::Error { error: "auth".into() });
        let mut g = Gateway::new(fast_retry());
        g.register("mock", mock.clone());
        assert_eq!(g.complete(&req("x")).unwrap_err().kind(), "auth");
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn cache_serves_identical_requests() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockProvider::new().with_default("fn main(){}"));
        let g = Gateway::with_mock(mock.clone()).with_cache(CacheStore::new(dir.path()));
        let a = g.cached_complete(&req("p")).unwrap();
        let b = g.cached_complete(&req("p")).unwrap();
        assert_eq!(a.text, "fn main(){}");
        assert_eq!(a, b);
        assert_eq!(mock.calls(), 1);
        g.cached_complete(&req("p").with_attempt(1, 0)).unwrap();
        assert_eq!(mock.calls(), 2);
        for repeat in 0..3 {
            g.cached_complete(&req("q").with_attempt(0, repeat)).unwrap();
        }
        assert_eq!(mock.calls(), 5);
    }

    #[test]
    fn error_completions_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockProvider::new().with_default("x").with_context_limit(3));
        let g = Gateway::with_mock(mock.clone()).with_cache(CacheStore::new(dir.path()));
        g.cached_complete(&req("too long")).unwrap();
        g.cached_complete(&req("too long")).unwrap();
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn cached_equals_uncached_under_mock() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockProvider::new().with_default("d"));
        mock.register_text(PromptMatcher::contains("a"), ["1", "2", "3"]).unwrap();
        let g = Gateway::with_mock(mock).with_cache(CacheStore::new(dir.path()));
        for prompt in ["a", "b", "ab"] {
            for attempt in 0..4 {
                let r = req(prompt).with_attempt(attempt, 0);
                let cached = g.cached_complete(&r);
                let again = g.cached_complete(&r);
                let direct = g.complete(&r);
                assert_eq!(cached.map(|c| c.text), direct.clone().map(|c| c.text));
                assert_eq!(again.map(|c| c.text), direct.map(|c| c.text));
            }
        }
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::per_minute(60 * 50); // 20ms apart
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(55));
    }
}

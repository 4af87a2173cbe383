use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, Completion, GatewayError, Provider};

/// Matches a prompt when every listed substring occurs in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMatcher {
    pub all_of: Vec<String>,
}

impl PromptMatcher {
    pub fn contains(s: impl Into<String>) -> Self {
        Self { all_of: vec![s.into()] }
    }

    pub fn all_of<I, S>(parts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            all_of: parts.into_iter().map(Into::into).collect(),
        }
    }

    pub fn matches(&self, prompt: &str) -> bool {
        self.all_of.iter().all(|s| prompt.contains(s.as_str()))
    }

    /// True when every prompt matched by `other` is necessarily matched by
    /// `self` as well.
    fn subsumes(&self, other: &PromptMatcher) -> bool {
        self.all_of
            .iter()
            .all(|needle| other.all_of.iter().any(|term| term.contains(needle.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockResponse {
    Text(String),
    Error { error: String },
    /// A completion cut off at the token limit.
    Truncated { truncated: String },
}

impl MockResponse {
    fn to_result(&self) -> Result<Completion, GatewayError> {
        match self {
            MockResponse::Text(t) => Ok(Completion::stop(t.clone())),
            MockResponse::Truncated { truncated } => Ok(Completion {
                finish_reason: super::FinishReason::Length,
                ..Completion::stop(truncated.clone())
            }),
            MockResponse::Error { error } => Err(match error.as_str() {
                "auth" => GatewayError::Auth {
                    status: 401,
                    message: "mock".into(),
                },
                "rate_limit" => GatewayError::RateLimited { retry_after: None },
                "timeout" => GatewayError::Timeout,
                "server" => GatewayError::Http {
                    status: 500,
                    body: "mock server error".into(),
                },
                other => GatewayError::Mock(other.to_string()),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(flatten)]
    pub matcher: PromptMatcher,
    pub responses: Vec<MockResponse>,
}

/// On-disk description of a mock provider.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<MockResponse>,
    /// Prompts longer than this many characters finish with an error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_limit_chars: Option<usize>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockFile {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Mock(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Mock(format!("{}: {e}", path.display())))
    }
}

/// Deterministic offline provider.
///
/// A request matching a rule receives `responses[attempt_seed]`; once the
/// script runs out its last entry repeats. Because the entry is a pure
/// function of the request, concurrent callers always see the same
/// script position for the same attempt.
#[derive(Debug, Default)]
pub struct MockProvider {
    rules: RwLock<Vec<MockRule>>,
    default: RwLock<Option<MockResponse>>,
    context_limit_chars: Option<usize>,
    calls: AtomicU64,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(file: MockFile) -> Result<Self, GatewayError> {
        let mock = Self {
            context_limit_chars: file.context_limit_chars,
            ..Self::default()
        };
        *mock.default.write().unwrap() = file.default;
        for rule in file.rules {
            mock.register(rule.matcher, rule.responses)?;
        }
        Ok(mock)
    }

    pub fn with_default(self, response: impl Into<String>) -> Self {
        *self.default.write().unwrap() = Some(MockResponse::Text(response.into()));
        self
    }

    pub fn with_context_limit(mut self, chars: usize) -> Self {
        self.context_limit_chars = Some(chars);
        self
    }

    /// Adds a rule. Rejects empty scripts and matchers that overlap an
    /// existing one, i.e. where one matcher accepts every prompt the other
    /// accepts.
    pub fn register(&self, matcher: PromptMatcher, script: Vec<MockResponse>) -> Result<(), GatewayError> {
        if script.is_empty() {
            return Err(GatewayError::Mock("empty response script".into()));
        }
        if matcher.all_of.is_empty() {
            return Err(GatewayError::Mock("matcher without terms matches everything; use the default response".into()));
        }
        let mut rules = self.rules.write().unwrap();
        if let Some(existing) = rules
            .iter()
            .find(|r| r.matcher.subsumes(&matcher) || matcher.subsumes(&r.matcher))
        {
            return Err(GatewayError::Mock(format!(
                "matcher {:?} overlaps existing matcher {:?}",
                matcher.all_of, existing.matcher.all_of
            )));
        }
        rules.push(MockRule {
            matcher,
            responses: script,
        });
        Ok(())
    }

    pub fn register_text<S: Into<String>>(
        &self,
        matcher: PromptMatcher,
        script: impl IntoIterator<Item = S>,
    ) -> Result<(), GatewayError> {
        self.register(matcher, script.into_iter().map(|s| MockResponse::Text(s.into())).collect())
    }

    pub fn set_default(&self, response: MockResponse) {
        *self.default.write().unwrap() = Some(response);
    }

    /// Number of requests served so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request.prompt_text();
        if let Some(limit) = self.context_limit_chars {
            if prompt.chars().count() > limit {
                return Ok(Completion::error(format!(
                    "prompt of {} characters exceeds the context limit of {limit}",
                    prompt.chars().count()
                )));
            }
        }
        let rules = self.rules.read().unwrap();
        let mut hits = rules.iter().filter(|r| r.matcher.matches(&prompt));
        let response = match (hits.next(), hits.next()) {
            (Some(rule), None) => {
                let idx = (request.attempt_seed as usize).min(rule.responses.len() - 1);
                rule.responses[idx].clone()
            }
            (Some(a), Some(b)) => {
                return Err(GatewayError::Mock(format!(
                    "prompt matched several rules: {:?} and {:?}",
                    a.matcher.all_of, b.matcher.all_of
                )))
            }
            (None, _) => match self.default.read().unwrap().clone() {
                Some(d) => d,
                None => return Err(GatewayError::Mock("no rule matched and no default response".into())),
            },
        };
        response.to_result()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, FinishReason, ModelConfig};

    fn req(prompt: &str, attempt: u64) -> ChatRequest {
        ChatRequest::new(ModelConfig::mock("m"), vec![ChatMessage::user(prompt)]).with_attempt(attempt, 0)
    }

    #[test]
    fn script_in_order_then_repeats_last() {
        let mock = MockProvider::new();
        mock.register_text(PromptMatcher::contains("translate"), ["bad code", "good code"])
            .unwrap();
        let texts: Vec<_> = (0..4)
            .map(|a| mock.complete(&req("please translate", a)).unwrap().text)
            .collect();
        assert_eq!(texts, ["bad code", "good code", "good code", "good code"]);
        assert_eq!(mock.calls(), 4);
    }

    #[test]
    fn unmatched_uses_default() {
        let mock = MockProvider::new().with_default("fallback");
        mock.register_text(PromptMatcher::contains("x"), ["y"]).unwrap();
        assert_eq!(mock.complete(&req("nothing", 0)).unwrap().text, "fallback");
        let bare = MockProvider::new();
        assert!(bare.complete(&req("nothing", 0)).is_err());
    }

    #[test]
    fn overlapping_matchers_rejected() {
        let mock = MockProvider::new();
        mock.register_text(PromptMatcher::contains("pseudo"), ["a"]).unwrap();
        assert!(mock.register_text(PromptMatcher::contains("pseudocode"), ["b"]).is_err());
        assert!(mock.register_text(PromptMatcher::all_of(["pseudo", "rust"]), ["b"]).is_err());
        assert!(mock.register_text(PromptMatcher::contains("pseudo"), ["b"]).is_err());
        mock.register_text(PromptMatcher::contains("direct"), ["c"]).unwrap();
    }

    #[test]
    fn context_limit_yields_error_completion() {
        let mock = MockProvider::new().with_default("x").with_context_limit(10);
        let c = mock.complete(&req("a prompt well over ten characters", 0)).unwrap();
        assert_eq!(c.finish_reason, FinishReason::Error);
        assert!(c.diagnostic.unwrap().contains("context"));
    }

    #[test]
    fn mock_file_parses_all_response_forms() {
        let file: MockFile = serde_json::from_str(
            r#"{"default": "d", "rules": [
                {"all_of": ["a"], "responses": ["one", {"error": "timeout"}, {"truncated": "par"}]}
            ]}"#,
        )
        .unwrap();
        let mock = MockProvider::from_file(file).unwrap();
        assert_eq!(mock.complete(&req("a", 0)).unwrap().text, "one");
        assert_eq!(mock.complete(&req("a", 1)).unwrap_err(), GatewayError::Timeout);
        assert_eq!(mock.complete(&req("a", 2)).unwrap().finish_reason, FinishReason::Length);
    }
}

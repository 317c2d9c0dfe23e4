//! Completion backends.
//!
//! Every model call in a session goes through [`CompletionBackend::complete`].
//! Remote endpoints and the offline backends used for replay and testing share
//! that one contract, so the orchestrator never knows which one it is talking to.
//! Each request carries the whole context; no backend keeps conversation state.

mod http;
mod offline;
mod retry;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use offline::{FixedResponder, FixtureEntry, RandomInteger, ScriptedReplay};
pub use retry::{RetryPolicy, Retrying, Sleeper};

/// Environment variable holding the endpoint API key unless configured otherwise.
pub const DEFAULT_API_KEY_ENV: &str = "DISCOURSE_API_KEY";

pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("replay fixture exhausted after {served} entries")]
    FixtureExhausted { served: usize },
    #[error("replay fixture turn {turn} expected speaker `{expected}` but request was tagged `{actual}`")]
    FixtureMismatch {
        turn: u32,
        expected: String,
        actual: String,
    },
    #[error("invalid replay fixture {path}: {reason}")]
    InvalidFixture { path: PathBuf, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl BackendError {
    /// Whether a retry with backoff can reasonably succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::EmptyCompletion => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// One prior utterance in a request, labelled by who said it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub role: String,
    pub content: String,
}

impl HistoryEntry {
    pub fn new(role: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// A single stateless completion call.
///
/// `tag` names the caller (an agent role, `extractor`, `moderator`, ...). It
/// never reaches the wire; replay fixtures use it to check alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub tag: String,
    pub system_prompt: String,
    pub history: Vec<HistoryEntry>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(tag: impl Into<String>, system_prompt: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            system_prompt: system_prompt.into(),
            history: Vec::new(),
            temperature: 0.7,
            max_tokens: 1024,
            seed: None,
        }
    }

    pub fn with_history(mut self, history: Vec<HistoryEntry>) -> Self {
        self.history = history;
        self
    }

    pub fn with_message(mut self, role: impl Into<String>, content: impl Into<String>) -> Self {
        self.history.push(HistoryEntry::new(role, content));
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, {MAX_TEMPERATURE}]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that can turn a request into completion text.
///
/// Implementations return non-empty text or an error. Offline backends hold a
/// cursor and must not be shared between sessions; the HTTP backend is safe to
/// call from many threads.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Declarative backend selection, as found in config files and CLI flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendKind {
    HttpEndpoint {
        base_url: String,
        model_id: String,
        #[serde(default = "default_api_key_env")]
        api_key_ref: String,
    },
    ScriptedReplay {
        fixture_path: PathBuf,
    },
    FixedResponder {
        responses: Vec<String>,
    },
    /// Uniform integer draws in `low..=high` from a seeded generator.
    RandomInteger {
        low: i64,
        high: i64,
        seed: u64,
    },
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

impl BackendKind {
    /// Builds a fresh backend instance. Offline kinds start with a new cursor.
    ///
    /// Remote endpoints are wrapped in [`Retrying`] with `retry`.
    pub fn open(&self, retry: &RetryPolicy) -> Result<Box<dyn CompletionBackend>, BackendError> {
        Ok(match self {
            BackendKind::HttpEndpoint {
                base_url,
                model_id,
                api_key_ref,
            } => {
                let key = std::env::var(api_key_ref).map_err(|_| {
                    BackendError::Config(format!("environment variable {api_key_ref} is not set"))
                })?;
                Box::new(Retrying::new(
                    HttpBackend::new(base_url.clone(), model_id.clone(), key),
                    retry.clone(),
                ))
            }
            BackendKind::ScriptedReplay { fixture_path } => {
                Box::new(ScriptedReplay::from_path(fixture_path)?)
            }
            BackendKind::FixedResponder { responses } => {
                Box::new(FixedResponder::new(responses.clone())?)
            }
            BackendKind::RandomInteger { low, high, seed } => {
                Box::new(RandomInteger::new(*low, *high, *seed)?)
            }
        })
    }

    /// Checks everything that can be checked before a session starts.
    pub fn preflight(&self) -> Result<(), BackendError> {
        match self {
            BackendKind::ScriptedReplay { fixture_path } => {
                ScriptedReplay::from_path(fixture_path).map(|_| ())
            }
            BackendKind::FixedResponder { responses } => {
                FixedResponder::new(responses.clone()).map(|_| ())
            }
            BackendKind::RandomInteger { low, high, seed } => {
                RandomInteger::new(*low, *high, *seed).map(|_| ())
            }
            BackendKind::HttpEndpoint { api_key_ref, .. } => {
                std::env::var(api_key_ref).map(|_| ()).map_err(|_| {
                    BackendError::Config(format!("environment variable {api_key_ref} is not set"))
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation_bounds() {
        let ok = CompletionRequest::new("t", "s");
        assert!(ok.validate().is_ok());
        assert!(ok.clone().with_temperature(2.5).validate().is_err());
        assert!(ok.clone().with_temperature(-0.1).validate().is_err());
        assert!(ok.clone().with_max_tokens(0).validate().is_err());
        assert!(ok.with_temperature(2.0).validate().is_ok());
    }

    #[test]
    fn history_keeps_insertion_order() {
        let req = CompletionRequest::new("t", "s")
            .with_message("Mayor", "one")
            .with_message("Scientist", "two")
            .with_message("Mayor", "three");
        let contents: Vec<_> = req.history.iter().map(|h| h.content.as_str()).collect();
        assert_eq!(contents, ["one", "two", "three"]);
    }

    #[test]
    fn retryable_classification() {
        assert!(BackendError::Transport("reset".into()).is_retryable());
        assert!(BackendError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Status {
            status: 401,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::FixtureExhausted { served: 3 }.is_retryable());
    }

    #[test]
    fn backend_kind_json_shape() {
        let kind: BackendKind = serde_json::from_str(
            r#"{"kind":"http-endpoint","base_url":"https://x/v1","model_id":"m"}"#,
        )
        .unwrap();
        assert_eq!(
            kind,
            BackendKind::HttpEndpoint {
                base_url: "https://x/v1".into(),
                model_id: "m".into(),
                api_key_ref: DEFAULT_API_KEY_ENV.into()
            }
        );
    }

    #[test]
    fn missing_fixture_fails_preflight() {
        let kind = BackendKind::ScriptedReplay {
            fixture_path: "/nonexistent/fixture.json".into(),
        };
        assert!(matches!(
            kind.preflight(),
            Err(BackendError::InvalidFixture { .. })
        ));
    }
}

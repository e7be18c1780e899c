//! Chat-completions transport.
//!
//! Everything above this module talks to [`ChatBackend`]. Implementations:
//! [`LiveBackend`] (OpenAI-compatible HTTP), [`ReplayBackend`] (serves
//! recorded fixtures, never touches the network), [`RecordingBackend`]
//! (wraps another backend and writes fixtures), and [`ScriptedBackend`]
//! (in-process responder for tests and fixture seeding).

pub mod fixture;
mod live;
mod record;
mod replay;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::LiveBackend;
pub use record::RecordingBackend;
pub use replay::ReplayBackend;
pub use scripted::{ScriptedBackend, ScriptedReply};

pub const DEFAULT_MODEL: &str = "gpt-4.1";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("no recorded fixture for request digest {digest}")]
    FixtureMiss { digest: String },
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("invalid LLM backend configuration: {0}")]
    Config(String),
}

impl From<crate::retry::DeadlineExceeded> for LlmError {
    fn from(_: crate::retry::DeadlineExceeded) -> Self {
        LlmError::BackendUnreachable("deadline exceeded".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::System => "system",
            Self::User => "user",
            Self::Assistant => "assistant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "system" => Some(Self::System),
            "user" => Some(Self::User),
            "assistant" => Some(Self::Assistant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Hex SHA-256 over the canonical request encoding; the fixture key.
    pub fn digest(&self) -> String {
        fixture::request_digest(self)
    }

    /// Content of the last user message, if any.
    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub content: String,
    /// When the completion was produced. Replayed completions carry the
    /// original recording time, which keeps replayed output deterministic.
    pub recorded_at: Option<DateTime<Utc>>,
    pub latency: Duration,
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    Live,
    Replay,
    Record,
}

impl std::str::FromStr for LlmMode {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Self::Live),
            "replay" => Ok(Self::Replay),
            "record" => Ok(Self::Record),
            other => Err(LlmError::Config(format!("unknown llm mode `{other}`"))),
        }
    }
}

/// Bearer token; redacted from `Debug` output.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}

fn default_parallel() -> usize {
    4
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmBackendConfig {
    pub mode: LlmMode,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub api_key: Option<ApiKey>,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_parallel")]
    pub max_parallel_agents: usize,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
}

impl LlmBackendConfig {
    pub fn replay(fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: LlmMode::Replay,
            base_url: None,
            api_key: None,
            model_name: default_model(),
            temperature: 0.0,
            max_parallel_agents: default_parallel(),
            request_timeout_secs: default_timeout(),
            fixture_dir: Some(fixture_dir.into()),
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let needs_remote = matches!(self.mode, LlmMode::Live | LlmMode::Record);
        let needs_fixtures = matches!(self.mode, LlmMode::Replay | LlmMode::Record);
        if needs_remote {
            if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                return Err(LlmError::Config(format!("{:?} mode requires base_url", self.mode)));
            }
            if self.api_key.as_ref().is_none_or(|k| k.expose().is_empty()) {
                return Err(LlmError::Config(format!("{:?} mode requires api_key", self.mode)));
            }
        }
        if needs_fixtures && self.fixture_dir.is_none() {
            return Err(LlmError::Config(format!("{:?} mode requires fixture_dir", self.mode)));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_parallel_agents == 0 {
            return Err(LlmError::Config("max_parallel_agents must be positive".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(LlmError::Config("model_name is empty".into()));
        }
        Ok(())
    }

    /// Validates and constructs the transport. Replay mode builds no HTTP client.
    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, LlmError> {
        self.validate()?;
        Ok(match self.mode {
            LlmMode::Replay => Arc::new(ReplayBackend::new(self.fixture_dir.clone().unwrap_or_default())),
            LlmMode::Live => Arc::new(self.live()?),
            LlmMode::Record => Arc::new(RecordingBackend::new(
                Arc::new(self.live()?),
                self.fixture_dir.clone().unwrap_or_default(),
            )),
        })
    }

    fn live(&self) -> Result<LiveBackend, LlmError> {
        LiveBackend::new(
            self.base_url.as_deref().unwrap_or_default(),
            self.api_key.clone().unwrap_or_else(|| ApiKey::new("")),
            self.request_timeout(),
        )
    }

    pub fn client(&self) -> Result<ChatClient, LlmError> {
        Ok(ChatClient::new(
            self.build_backend()?,
            self.model_name.clone(),
            self.temperature,
        ))
    }
}

/// A backend bound to model parameters.
#[derive(Clone)]
pub struct ChatClient {
    backend: Arc<dyn ChatBackend>,
    model: String,
    temperature: f64,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .finish_non_exhaustive()
    }
}

impl ChatClient {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>, temperature: f64) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature,
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn request(&self, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
        }
    }

    pub async fn complete(&self, messages: Vec<Message>) -> Result<Completion, LlmError> {
        self.backend.complete(&self.request(messages)).await
    }
}

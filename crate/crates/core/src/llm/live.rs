use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ApiKey, ChatBackend, ChatRequest, Completion, LlmError, Message};
use crate::retry::{retry, Attempt, RetryPolicy};

/// OpenAI-compatible client: `POST {base_url}/v1/chat/completions` with a
/// bearer token; the answer is the first choice's message content.
#[derive(Debug, Clone)]
pub struct LiveBackend {
    url: String,
    api_key: ApiKey,
    client: reqwest::Client,
    timeout: Duration,
    policy: RetryPolicy,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

impl LiveBackend {
    pub fn new(base_url: &str, api_key: ApiKey, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(Self {
            url: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            client,
            timeout,
            policy: RetryPolicy::LLM,
        })
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }
}

#[async_trait]
impl ChatBackend for LiveBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
        };
        let started = Instant::now();
        let content = retry(self.policy, |_| {
            let req = self
                .client
                .post(&self.url)
                .bearer_auth(self.api_key.expose())
                .timeout(self.timeout)
                .json(&body);
            async move {
                let unreachable = |e: reqwest::Error| Attempt::Transient(LlmError::BackendUnreachable(e.to_string()));
                let resp = req.send().await.map_err(unreachable)?;
                let status = resp.status();
                if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
                    return Err(Attempt::Transient(LlmError::BackendUnreachable(format!("HTTP {status}"))));
                }
                if !status.is_success() {
                    let text = resp.text().await.unwrap_or_default();
                    return Err(Attempt::Fatal(LlmError::BackendUnreachable(format!(
                        "HTTP {status}: {}",
                        text.chars().take(300).collect::<String>()
                    ))));
                }
                let bytes = resp.bytes().await.map_err(unreachable)?;
                let parsed: WireResponse = serde_json::from_slice(&bytes)
                    .map_err(|e| Attempt::Fatal(LlmError::Malformed(e.to_string())))?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content.unwrap_or_default())
                    .ok_or_else(|| Attempt::Fatal(LlmError::Malformed("response has no choices".into())))
            }
        })
        .await?;
        Ok(Completion {
            content,
            recorded_at: None,
            latency: started.elapsed(),
        })
    }
}

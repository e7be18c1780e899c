use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use chrono::Utc;

use super::fixture::{truncate_to_millis, Fixture};
use super::{ChatBackend, ChatRequest, Completion, LlmError};

/// Forwards to an inner backend and writes one fixture per successful call.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    dir: PathBuf,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }
}

#[async_trait]
impl ChatBackend for RecordingBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let started = Instant::now();
        let completion = self.inner.complete(request).await?;
        let latency = if completion.latency.is_zero() {
            started.elapsed()
        } else {
            completion.latency
        };
        let recorded_at = truncate_to_millis(completion.recorded_at.unwrap_or_else(Utc::now));
        let fixture = Fixture {
            request: request.clone(),
            completion: completion.content,
            recorded_at,
            latency: std::time::Duration::from_millis(latency.as_millis() as u64),
        };
        let dir = self.dir.clone();
        let to_store = fixture.clone();
        tokio::task::spawn_blocking(move || to_store.store(&dir))
            .await
            .map_err(|e| LlmError::Fixture(format!("fixture writer: {e}")))??;
        Ok(Completion {
            content: fixture.completion,
            recorded_at: Some(fixture.recorded_at),
            latency: fixture.latency,
        })
    }
}

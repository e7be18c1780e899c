use std::path::PathBuf;

use async_trait::async_trait;

use super::fixture::{fixture_path, Fixture};
use super::{ChatBackend, ChatRequest, Completion, LlmError};

/// Serves completions from recorded fixtures. Holds no network client.
///
/// Each fixture's recorded latency is replayed as a delay, so completion
/// order under concurrency follows the recording.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
    honor_latency: bool,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            honor_latency: true,
        }
    }

    pub fn without_latency(mut self) -> Self {
        self.honor_latency = false;
        self
    }

    pub fn dir(&self) -> &std::path::Path {
        &self.dir
    }
}

#[async_trait]
impl ChatBackend for ReplayBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let digest = request.digest();
        let path = fixture_path(&self.dir, &digest);
        let text = match tokio::fs::read_to_string(&path).await {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LlmError::FixtureMiss { digest });
            }
            Err(e) => return Err(LlmError::Fixture(format!("{}: {e}", path.display()))),
        };
        let fixture = Fixture::decode(&text)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        if fixture.request != *request {
            return Err(LlmError::Fixture(format!(
                "{}: stored request differs from incoming request",
                path.display()
            )));
        }
        if self.honor_latency && !fixture.latency.is_zero() {
            tokio::time::sleep(fixture.latency).await;
        }
        Ok(Completion {
            content: fixture.completion,
            recorded_at: Some(fixture.recorded_at),
            latency: fixture.latency,
        })
    }
}

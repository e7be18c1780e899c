use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;

use super::{ChatBackend, ChatRequest, Completion, LlmError};

type Responder = dyn Fn(&ChatRequest) -> Option<ScriptedReply> + Send + Sync;

/// What a scripted backend answers for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedReply {
    pub content: String,
    pub latency: Duration,
}

impl ScriptedReply {
    pub fn new(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            latency: Duration::ZERO,
        }
    }

    pub fn after(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }
}

/// In-process backend that answers through a closure. Requests the closure
/// declines (returns `None`) fail as unreachable. Every request is logged.
pub struct ScriptedBackend {
    respond: Box<Responder>,
    calls: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new(respond: impl Fn(&ChatRequest) -> Option<ScriptedReply> + Send + Sync + 'static) -> Self {
        Self {
            respond: Box::new(respond),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("log lock").clone()
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("log lock").push(request.clone());
        let reply = (self.respond)(request)
            .ok_or_else(|| LlmError::BackendUnreachable("scripted backend has no reply".into()))?;
        if !reply.latency.is_zero() {
            tokio::time::sleep(reply.latency).await;
        }
        Ok(Completion {
            content: reply.content,
            recorded_at: None,
            latency: reply.latency,
        })
    }
}

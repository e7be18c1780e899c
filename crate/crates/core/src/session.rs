//! Follow-up chat sessions grounded in one case's report.
//!
//! Each session is seeded with a system message holding the case evidence
//! and the final report. Sessions are isolated from each other; calls on a
//! single session are serialized. History lives in memory, optionally
//! mirrored to disk through a [`SessionPersistence`] adapter.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;

use crate::llm::{ChatClient, LlmError, Message};
use crate::orchestration::FinalReport;
use crate::prompts::{self, CorePrompt};

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);
pub const DEFAULT_MAX_MESSAGES: usize = 64;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session not found")]
    SessionNotFound,
    #[error("question is empty")]
    EmptyQuestion,
    #[error("case not found")]
    CaseNotFound,
    #[error("case has no completed report")]
    ReportNotReady,
    #[error("model returned an empty answer")]
    EmptyAnswer,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("session persistence: {0}")]
    Persistence(String),
}

/// 128 random bits, rendered as 32 lowercase hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn random() -> Self {
        Self(format!("{:032x}", rand::random::<u128>()))
    }

    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 32 && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()))
            .then(|| Self(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Author {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub author: Author,
    pub content: String,
    pub at: DateTime<Utc>,
}

impl ChatMessage {
    fn to_wire(&self) -> Message {
        match self.author {
            Author::System => Message::system(self.content.clone()),
            Author::User => Message::user(self.content.clone()),
            Author::Assistant => Message::assistant(self.content.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: SessionId,
    pub case_id: String,
    pub history: Vec<ChatMessage>,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
}

impl ChatSession {
    /// User and assistant messages, in order; the system seed is excluded.
    pub fn transcript(&self) -> Vec<ChatMessage> {
        self.history
            .iter()
            .filter(|m| m.author != Author::System)
            .cloned()
            .collect()
    }

    /// Outbound message list for the next turn: the system seed, then the
    /// newest history that fits under `cap`, dropping the oldest
    /// question/answer pairs first.
    fn outbound(&self, question: &str, cap: usize) -> Vec<Message> {
        let (seed, rest) = self.history.split_first().expect("sessions are seeded");
        let mut turns: Vec<Message> = rest.iter().map(ChatMessage::to_wire).collect();
        turns.push(Message::user(question));
        let budget = cap.saturating_sub(1).max(1);
        while turns.len() > budget && turns.len() >= 3 {
            turns.drain(..2);
        }
        let mut out = Vec::with_capacity(turns.len() + 1);
        out.push(seed.to_wire());
        out.extend(turns);
        out
    }
}

pub trait SessionPersistence: Send + Sync {
    fn save(&self, session: &ChatSession) -> Result<(), SessionError>;
    fn remove(&self, id: &SessionId) -> Result<(), SessionError>;
    fn load_all(&self) -> Result<Vec<ChatSession>, SessionError>;
}

/// One JSON file per session under a directory.
#[derive(Debug, Clone)]
pub struct FileSessionPersistence {
    dir: PathBuf,
}

impl FileSessionPersistence {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| SessionError::Persistence(e.to_string()))?;
        Ok(Self { dir })
    }

    fn path(&self, id: &SessionId) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }
}

impl SessionPersistence for FileSessionPersistence {
    fn save(&self, session: &ChatSession) -> Result<(), SessionError> {
        let err = |e: std::io::Error| SessionError::Persistence(e.to_string());
        let path = self.path(&session.session_id);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(session).map_err(|e| SessionError::Persistence(e.to_string()))?;
        std::fs::write(&tmp, body).map_err(err)?;
        std::fs::rename(&tmp, &path).map_err(err)
    }

    fn remove(&self, id: &SessionId) -> Result<(), SessionError> {
        match std::fs::remove_file(self.path(id)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(SessionError::Persistence(e.to_string())),
        }
    }

    fn load_all(&self) -> Result<Vec<ChatSession>, SessionError> {
        let err = |e: std::io::Error| SessionError::Persistence(e.to_string());
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir).map_err(err)? {
            let path = entry.map_err(err)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(err)?;
            match serde_json::from_slice::<ChatSession>(&bytes) {
                Ok(s) => out.push(s),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable session file"),
            }
        }
        Ok(out)
    }
}

type Clock = dyn Fn() -> DateTime<Utc> + Send + Sync;

#[derive(Debug, Clone, Copy)]
pub struct SessionStoreConfig {
    pub ttl: Duration,
    pub max_messages: usize,
}

impl Default for SessionStoreConfig {
    fn default() -> Self {
        Self {
            ttl: DEFAULT_TTL,
            max_messages: DEFAULT_MAX_MESSAGES,
        }
    }
}

/// Concurrent session store. Idle sessions expire after the TTL and are
/// evicted lazily on access.
pub struct SessionStore {
    sessions: RwLock<HashMap<SessionId, Arc<Mutex<ChatSession>>>>,
    config: SessionStoreConfig,
    persistence: Option<Arc<dyn SessionPersistence>>,
    clock: Arc<Clock>,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::new(SessionStoreConfig::default())
    }
}

impl SessionStore {
    pub fn new(config: SessionStoreConfig) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            config,
            persistence: None,
            clock: Arc::new(Utc::now),
        }
    }

    /// Attaches a persistence adapter and loads the sessions it holds.
    pub fn with_persistence(mut self, persistence: Arc<dyn SessionPersistence>) -> Result<Self, SessionError> {
        let loaded = persistence.load_all()?;
        {
            let mut map = self.sessions.write().expect("session map lock");
            for s in loaded {
                map.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        self.persistence = Some(persistence);
        Ok(self)
    }

    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn expired(&self, session: &ChatSession, now: DateTime<Utc>) -> bool {
        let ttl = chrono::Duration::from_std(self.config.ttl).unwrap_or(chrono::Duration::MAX);
        now - session.last_active > ttl
    }

    fn persist(&self, session: &ChatSession) {
        if let Some(p) = &self.persistence {
            if let Err(e) = p.save(session) {
                tracing::warn!(session = %session.session_id, error = %e, "failed to persist session");
            }
        }
    }

    fn forget(&self, id: &SessionId) {
        self.sessions.write().expect("session map lock").remove(id);
        if let Some(p) = &self.persistence {
            let _ = p.remove(id);
        }
    }

    /// Drops expired sessions that are not currently in use.
    pub fn evict_expired(&self) -> usize {
        let now = self.now();
        let stale: Vec<SessionId> = {
            let map = self.sessions.read().expect("session map lock");
            map.iter()
                .filter(|(_, s)| s.try_lock().is_ok_and(|s| self.expired(&s, now)))
                .map(|(id, _)| id.clone())
                .collect()
        };
        for id in &stale {
            self.forget(id);
        }
        stale.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn open_session(&self, case_id: &str, report: &FinalReport, core: &CorePrompt) -> ChatSession {
        self.evict_expired();
        let now = self.now();
        let seed = ChatMessage {
            author: Author::System,
            content: prompts::chat_system_prompt(&core.text, &report.markdown),
            at: now,
        };
        let mut map = self.sessions.write().expect("session map lock");
        let session_id = loop {
            let id = SessionId::random();
            if !map.contains_key(&id) {
                break id;
            }
        };
        let session = ChatSession {
            session_id: session_id.clone(),
            case_id: case_id.to_string(),
            history: vec![seed],
            created_at: now,
            last_active: now,
        };
        map.insert(session_id, Arc::new(Mutex::new(session.clone())));
        drop(map);
        self.persist(&session);
        session
    }

    fn handle(&self, id: &SessionId) -> Result<Arc<Mutex<ChatSession>>, SessionError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or(SessionError::SessionNotFound)
    }

    /// Locks a live session, evicting it instead if it has expired.
    async fn lock_live(&self, id: &SessionId) -> Result<tokio::sync::OwnedMutexGuard<ChatSession>, SessionError> {
        let guard = self.handle(id)?.lock_owned().await;
        if self.expired(&guard, self.now()) {
            drop(guard);
            self.forget(id);
            return Err(SessionError::SessionNotFound);
        }
        Ok(guard)
    }

    /// Sends the question with the retained history and records the exchange.
    /// On any error the history is left exactly as it was.
    pub async fn chat(&self, id: &SessionId, question: &str, client: &ChatClient) -> Result<String, SessionError> {
        let mut session = self.lock_live(id).await?;
        let question = question.trim();
        if question.is_empty() {
            return Err(SessionError::EmptyQuestion);
        }
        let asked_at = self.now().max(session.last_active);
        let messages = session.outbound(question, self.config.max_messages);
        let completion = client.complete(messages).await?;
        let answer = completion.content.trim().to_string();
        if answer.is_empty() {
            return Err(SessionError::EmptyAnswer);
        }
        let answered_at = self.now().max(asked_at);
        session.history.push(ChatMessage {
            author: Author::User,
            content: question.to_string(),
            at: asked_at,
        });
        session.history.push(ChatMessage {
            author: Author::Assistant,
            content: answer.clone(),
            at: answered_at,
        });
        session.last_active = answered_at;
        self.persist(&session);
        Ok(answer)
    }

    pub async fn transcript(&self, id: &SessionId) -> Result<Vec<ChatMessage>, SessionError> {
        Ok(self.lock_live(id).await?.transcript())
    }

    pub async fn snapshot(&self, id: &SessionId) -> Result<ChatSession, SessionError> {
        Ok(self.lock_live(id).await?.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::DiagnosticGrade;
    use crate::llm::{ScriptedBackend, ScriptedReply};
    use std::collections::HashSet;
    use std::sync::atomic::{AtomicI64, Ordering};

    fn fixtures() -> (FinalReport, CorePrompt) {
        (
            FinalReport {
                markdown: "## Impression\nAdvanced glaucoma OS.".into(),
                generated_at: Utc::now(),
            },
            CorePrompt {
                text: "Network A suggests x. Network B estimates y.".into(),
                grade: DiagnosticGrade::GlaucomaDetected,
                cdr_display: "0.62".into(),
                has_note: false,
            },
        )
    }

    fn echo_client() -> (Arc<ScriptedBackend>, ChatClient) {
        let backend = Arc::new(ScriptedBackend::new(|req| {
            let q = req.last_user()?;
            if q.contains("fail") {
                return None;
            }
            if q.contains("blank") {
                return Some(ScriptedReply::new("  "));
            }
            Some(ScriptedReply::new(format!("answer to: {q}")))
        }));
        (backend.clone(), ChatClient::new(backend, "gpt-4.1", 0.0))
    }

    #[test]
    fn ids_are_unique_and_well_formed() {
        let ids: HashSet<String> = (0..10_000).map(|_| SessionId::random().0).collect();
        assert_eq!(ids.len(), 10_000);
        assert!(ids.iter().all(|id| SessionId::parse(id).is_some()));
        assert!(SessionId::parse("XYZ").is_none());
    }

    #[tokio::test]
    async fn open_seeds_system_message() {
        let store = SessionStore::default();
        let (report, core) = fixtures();
        let s = store.open_session("case-1", &report, &core);
        assert_eq!(s.history.len(), 1);
        assert_eq!(s.history[0].author, Author::System);
        assert!(s.history[0].content.contains(&core.text));
        assert!(s.history[0].content.contains(&report.markdown));
        assert!(store.transcript(&s.session_id).await.unwrap().is_empty());
        let other = store.open_session("case-1", &report, &core);
        assert_ne!(s.session_id, other.session_id);
    }

    #[tokio::test]
    async fn chat_grows_history_by_two_and_failures_are_atomic() {
        let store = SessionStore::default();
        let (report, core) = fixtures();
        let (backend, client) = echo_client();
        let s = store.open_session("c", &report, &core);

        let a = store.chat(&s.session_id, "What does CDR 0.62 mean?", &client).await.unwrap();
        assert_eq!(a, "answer to: What does CDR 0.62 mean?");
        assert_eq!(store.snapshot(&s.session_id).await.unwrap().history.len(), 3);
        // The whole history goes out with each turn.
        let sent = backend.requests();
        assert_eq!(sent[0].messages.len(), 2);

        let before = store.snapshot(&s.session_id).await.unwrap();
        for bad in ["   ", "please fail", "blank please"] {
            assert!(store.chat(&s.session_id, bad, &client).await.is_err());
            assert_eq!(store.snapshot(&s.session_id).await.unwrap(), before);
        }
        assert!(matches!(
            store.chat(&s.session_id, "", &client).await,
            Err(SessionError::EmptyQuestion)
        ));

        store.chat(&s.session_id, "second", &client).await.unwrap();
        let t = store.transcript(&s.session_id).await.unwrap();
        let authors: Vec<_> = t.iter().map(|m| m.author).collect();
        assert_eq!(authors, [Author::User, Author::Assistant, Author::User, Author::Assistant]);
        assert_eq!(backend.requests().last().unwrap().messages.len(), 4);
    }

    #[tokio::test]
    async fn unknown_session() {
        let store = SessionStore::default();
        let (_, client) = echo_client();
        let id = SessionId::random();
        assert!(matches!(store.chat(&id, "q", &client).await, Err(SessionError::SessionNotFound)));
        assert!(matches!(store.transcript(&id).await, Err(SessionError::SessionNotFound)));
    }

    #[tokio::test]
    async fn history_cap_keeps_seed_and_drops_oldest_pairs() {
        let store = SessionStore::new(SessionStoreConfig {
            ttl: DEFAULT_TTL,
            max_messages: 6,
        });
        let (report, core) = fixtures();
        let (backend, client) = echo_client();
        let s = store.open_session("c", &report, &core);
        for i in 0..5 {
            store.chat(&s.session_id, &format!("q{i}"), &client).await.unwrap();
        }
        let last = backend.requests().pop().unwrap();
        assert!(last.messages.len() <= 6);
        assert_eq!(last.messages[0].role, crate::llm::MessageRole::System);
        let contents: Vec<_> = last.messages[1..].iter().map(|m| m.content.as_str()).collect();
        assert_eq!(contents, ["q2", "answer to: q2", "q3", "answer to: q3", "q4"]);
        // Stored history is never truncated.
        assert_eq!(store.transcript(&s.session_id).await.unwrap().len(), 10);
    }

    #[tokio::test]
    async fn idle_sessions_expire_lazily() {
        let now = Arc::new(AtomicI64::new(1_800_000_000));
        let clock = now.clone();
        let store = SessionStore::default()
            .with_clock(move || DateTime::from_timestamp(clock.load(Ordering::SeqCst), 0).unwrap());
        let (report, core) = fixtures();
        let s = store.open_session("c", &report, &core);
        now.fetch_add(23 * 3600, Ordering::SeqCst);
        assert!(store.transcript(&s.session_id).await.is_ok());
        now.fetch_add(2 * 3600, Ordering::SeqCst);
        assert!(matches!(store.transcript(&s.session_id).await, Err(SessionError::SessionNotFound)));
        assert!(store.is_empty());
    }

    #[tokio::test]
    async fn last_active_never_decreases() {
        let now = Arc::new(AtomicI64::new(1_800_000_000));
        let clock = now.clone();
        let store = SessionStore::default()
            .with_clock(move || DateTime::from_timestamp(clock.load(Ordering::SeqCst), 0).unwrap());
        let (report, core) = fixtures();
        let (_, client) = echo_client();
        let s = store.open_session("c", &report, &core);
        store.chat(&s.session_id, "a", &client).await.unwrap();
        let t1 = store.snapshot(&s.session_id).await.unwrap().last_active;
        now.fetch_sub(600, Ordering::SeqCst); // wall clock steps back
        store.chat(&s.session_id, "b", &client).await.unwrap();
        assert!(store.snapshot(&s.session_id).await.unwrap().last_active >= t1);
    }

    #[tokio::test]
    async fn file_persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (report, core) = fixtures();
        let (_, client) = echo_client();
        let id = {
            let p = Arc::new(FileSessionPersistence::new(dir.path()).unwrap());
            let store = SessionStore::default().with_persistence(p).unwrap();
            let s = store.open_session("case-9", &report, &core);
            store.chat(&s.session_id, "persist me", &client).await.unwrap();
            s.session_id
        };
        let p = Arc::new(FileSessionPersistence::new(dir.path()).unwrap());
        let store = SessionStore::default().with_persistence(p).unwrap();
        let t = store.transcript(&id).await.unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].content, "persist me");
        assert_eq!(store.snapshot(&id).await.unwrap().case_id, "case-9");
    }
}

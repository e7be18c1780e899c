#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use medchat_core::llm::{ChatClient, MessageRole, ScriptedBackend, ScriptedReply};
use medchat_core::session::SessionStore;
use medchat_core::vision::encode_rgb_png;
use medchat_core::{Orchestrator, Pipeline};
use medchat_gateway::{router, selfcheck, AppState, ServiceConfig};
use reqwest::multipart::{Form, Part};
use serde_json::Value;

pub struct Server {
    pub base: String,
    pub state: Arc<AppState>,
}

impl Server {
    pub async fn start(state: AppState) -> Self {
        let state = Arc::new(state);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let app = router(state.clone());
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self {
            base: format!("http://{addr}"),
            state,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

pub fn replay_config(fixture_dir: &Path) -> ServiceConfig {
    selfcheck::service_config(fixture_dir)
}

pub fn replay_state(fixture_dir: &Path) -> AppState {
    AppState::from_config(&replay_config(fixture_dir)).unwrap()
}

pub fn shipped_state() -> AppState {
    replay_state(&selfcheck::fixture_dir())
}

/// Answers every request generically so any upload can complete.
pub fn scripted_state() -> AppState {
    let backend = ScriptedBackend::new(|req| {
        let last = req.last_user()?;
        let text = if req.messages[0].role == MessageRole::System {
            "Scripted follow-up answer."
        } else if last.starts_with("Given the following diagnostic context") {
            "Ophthalmologist\nOptometrist"
        } else if last.contains("write a final comprehensive diagnostic report") {
            "## Summary\n\nScripted final report."
        } else {
            "Scripted specialist findings."
        };
        Some(ScriptedReply::new(text))
    });
    let cfg = replay_config(Path::new("unused"));
    let chat = ChatClient::new(Arc::new(backend), cfg.llm.model_name.clone(), 0.0);
    AppState {
        cases: Default::default(),
        sessions: SessionStore::default(),
        pipeline: Pipeline::new(
            cfg.vision.build().unwrap(),
            Orchestrator::new(chat.clone(), cfg.llm.max_parallel_agents),
        ),
        chat,
        max_upload_bytes: cfg.max_upload_bytes,
        report_deadline: cfg.report_deadline(),
        static_dir: None,
    }
}

pub fn fixture_png() -> Vec<u8> {
    let img = selfcheck::image();
    encode_rgb_png(img.width(), img.height(), img.rgb())
}

pub fn image_part(bytes: Vec<u8>, file_name: &str, mime: &str) -> Part {
    Part::bytes(bytes).file_name(file_name.to_string()).mime_str(mime).unwrap()
}

pub async fn upload(http: &reqwest::Client, server: &Server, part: Part, note: Option<&str>) -> reqwest::Response {
    let mut form = Form::new().part("image", part);
    if let Some(n) = note {
        form = form.text("note", n.to_string());
    }
    http.post(server.url("/api/cases")).multipart(form).send().await.unwrap()
}

/// Uploads the shipped fixture case and returns its id.
pub async fn upload_fixture_case(http: &reqwest::Client, server: &Server) -> String {
    let resp = upload(
        http,
        server,
        image_part(fixture_png(), "selfcheck.png", "image/png"),
        Some(selfcheck::CASE_NOTE),
    )
    .await;
    assert_eq!(resp.status(), 201);
    let body: Value = resp.json().await.unwrap();
    body["case_id"].as_str().unwrap().to_string()
}

pub struct Schemas {
    upload: jsonschema::Validator,
    report: jsonschema::Validator,
    case_view: jsonschema::Validator,
    chat: jsonschema::Validator,
    error: jsonschema::Validator,
}

#[derive(Clone, Copy, Debug)]
pub enum Schema {
    Upload,
    Report,
    CaseView,
    Chat,
    Error,
}

impl Schemas {
    pub fn load() -> Self {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas");
        let load = |name: &str| {
            let text = std::fs::read_to_string(dir.join(name)).unwrap();
            let schema: Value = serde_json::from_str(&text).unwrap();
            jsonschema::validator_for(&schema).unwrap()
        };
        Self {
            upload: load("upload_response.json"),
            report: load("report_response.json"),
            case_view: load("case_view.json"),
            chat: load("chat_response.json"),
            error: load("error.json"),
        }
    }

    pub fn check(&self, schema: Schema, value: &Value) -> Result<(), String> {
        let v = match schema {
            Schema::Upload => &self.upload,
            Schema::Report => &self.report,
            Schema::CaseView => &self.case_view,
            Schema::Chat => &self.chat,
            Schema::Error => &self.error,
        };
        let errors: Vec<String> = v.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(format!("{schema:?}: {}", errors.join("; ")))
        }
    }

    pub fn assert(&self, schema: Schema, value: &Value) {
        if let Err(e) = self.check(schema, value) {
            panic!("{e}\n{value:#}");
        }
    }
}

/// Extracted PDF text with whitespace runs collapsed to single spaces.
pub fn pdf_text(bytes: &[u8]) -> String {
    let raw = pdf_extract::extract_text_from_mem(bytes).unwrap();
    normalize(&raw)
}

pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A listener that counts every connection made to it. Configured as the
/// remote endpoint it proves nothing dials out.
pub struct Canary {
    pub addr: SocketAddr,
    accepted: Arc<AtomicUsize>,
}

impl Canary {
    pub async fn start() -> Self {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let accepted = Arc::new(AtomicUsize::new(0));
        let counter = accepted.clone();
        tokio::spawn(async move {
            while let Ok((_sock, _)) = listener.accept().await {
                counter.fetch_add(1, Ordering::SeqCst);
            }
        });
        Self { addr, accepted }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn accepted(&self) -> usize {
        self.accepted.load(Ordering::SeqCst)
    }
}

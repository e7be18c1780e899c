//! REST endpoints.
//!
//! | method | path                          | success |
//! |--------|-------------------------------|---------|
//! | POST   | `/api/cases`                  | 201 [`UploadResponse`] |
//! | GET    | `/api/cases/{id}`             | 200 [`CaseView`] |
//! | POST   | `/api/cases/{id}/report`      | 200 [`ReportResponse`] |
//! | GET    | `/api/cases/{id}/pdf`         | 200 `application/pdf` |
//! | POST   | `/api/sessions/{id}/chat`     | 200 [`ChatResponse`] |
//!
//! Errors are JSON [`ErrorBody`] values. Anything else falls through to the
//! static console assets when a static directory is configured.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::multipart::MultipartError;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use medchat_core::llm::ChatClient;
use medchat_core::session::{FileSessionPersistence, SessionError, SessionId, SessionStore};
use medchat_core::{FundusImage, Orchestrator, Pipeline, SubReport};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::cases::{stage_failure, CaseError, CaseFailure, CaseStatus, CaseStore};
use crate::config::ServiceConfig;
use crate::pdf::{self, ReportBundle};

/// Multipart framing allowance on top of the image byte limit.
const MULTIPART_OVERHEAD: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadResponse {
    pub case_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportResponse {
    pub case_id: String,
    pub grade: String,
    pub cdr_display: String,
    pub roles: Vec<String>,
    pub sub_reports: Vec<SubReport>,
    pub final_report_markdown: String,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseView {
    pub case_id: String,
    pub status: CaseStatus,
    pub created_at: DateTime<Utc>,
    pub width: u32,
    pub height: u32,
    pub has_note: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdr_display: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CaseFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatBody {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatResponse {
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                message: message.into(),
                stage: None,
            },
        }
    }

    fn pipeline(failure: CaseFailure) -> Self {
        let status = if failure.stage == DEADLINE_STAGE {
            StatusCode::GATEWAY_TIMEOUT
        } else {
            StatusCode::BAD_GATEWAY
        };
        Self {
            status,
            body: ErrorBody {
                error: "pipeline_failed".into(),
                message: failure.message,
                stage: Some(failure.stage),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<CaseError> for ApiError {
    fn from(e: CaseError) -> Self {
        let (status, code) = match e {
            CaseError::NotFound => (StatusCode::NOT_FOUND, "case_not_found"),
            CaseError::AlreadyProcessing => (StatusCode::CONFLICT, "already_processing"),
            CaseError::AlreadyComplete => (StatusCode::CONFLICT, "already_complete"),
            CaseError::NotReady => (StatusCode::CONFLICT, "report_not_ready"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::SessionNotFound => (StatusCode::NOT_FOUND, "session_not_found"),
            SessionError::EmptyQuestion => (StatusCode::UNPROCESSABLE_ENTITY, "empty_question"),
            SessionError::CaseNotFound => (StatusCode::NOT_FOUND, "case_not_found"),
            SessionError::ReportNotReady => (StatusCode::CONFLICT, "report_not_ready"),
            SessionError::EmptyAnswer | SessionError::Llm(_) => (StatusCode::BAD_GATEWAY, "chat_failed"),
            SessionError::Persistence(_) => (StatusCode::INTERNAL_SERVER_ERROR, "persistence"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "too_large"
        } else {
            "bad_multipart"
        };
        Self::new(status, code, e.body_text())
    }
}

/// Stage recorded when the report request budget expires.
pub const DEADLINE_STAGE: &str = "deadline";

/// Shared service state.
pub struct AppState {
    pub cases: CaseStore,
    pub sessions: SessionStore,
    pub pipeline: Pipeline,
    pub chat: ChatClient,
    pub max_upload_bytes: usize,
    pub report_deadline: Duration,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn from_config(config: &ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let vision = config.vision.build()?;
        let chat = config.llm.client()?;
        let orchestrator = Orchestrator::new(chat.clone(), config.llm.max_parallel_agents);
        let mut sessions = SessionStore::new(config.session_store_config());
        if let Some(dir) = &config.persistence_path {
            sessions = sessions.with_persistence(Arc::new(FileSessionPersistence::new(dir)?))?;
        }
        Ok(Self {
            cases: CaseStore::default(),
            sessions,
            pipeline: Pipeline::new(vision, orchestrator),
            chat,
            max_upload_bytes: config.max_upload_bytes,
            report_deadline: config.report_deadline(),
            static_dir: config.static_dir.clone(),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.max_upload_bytes + MULTIPART_OVERHEAD;
    let api = Router::new()
        .route("/api/cases", post(upload).layer(DefaultBodyLimit::max(limit)))
        .route("/api/cases/{case_id}", get(case_view))
        .route("/api/cases/{case_id}/report", post(generate_report))
        .route("/api/cases/{case_id}/pdf", get(download_pdf))
        .route("/api/sessions/{session_id}/chat", post(chat));
    let app = match &state.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") }),
    };
    app.layer(TraceLayer::new_for_http()).with_state(state)
}

/// Sidecar key from the uploaded file name, restricted to a safe alphabet.
fn case_key(file_name: Option<&str>, fallback: &str) -> String {
    let stem = file_name
        .map(std::path::Path::new)
        .and_then(|p| p.file_stem())
        .and_then(|s| s.to_str())
        .unwrap_or("");
    let safe = !stem.is_empty()
        && !stem.starts_with('.')
        && stem.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if safe {
        stem.to_string()
    } else {
        fallback.to_string()
    }
}

async fn upload(State(state): State<Arc<AppState>>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut image: Option<(Option<String>, axum::body::Bytes)> = None;
    let mut note: Option<String> = None;
    while let Some(field) = form.next_field().await? {
        match field.name() {
            Some("image") => {
                let name = field.file_name().map(str::to_string);
                let bytes = field.bytes().await?;
                image = Some((name, bytes));
            }
            Some("note") => note = Some(field.text().await?),
            _ => {}
        }
    }
    let (file_name, bytes) =
        image.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_image", "multipart field `image` is required"))?;
    if bytes.len() > state.max_upload_bytes {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("image is {} bytes; limit is {}", bytes.len(), state.max_upload_bytes),
        ));
    }
    let decoded = tokio::task::spawn_blocking(move || FundusImage::decode(&bytes))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let image = decoded.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "unsupported_image", e.to_string()))?;
    // A blank note is no note.
    let note = note.map(|n| n.trim().to_string()).filter(|n| !n.is_empty());
    let provisional = uuid::Uuid::new_v4().simple().to_string();
    let key = case_key(file_name.as_deref(), &provisional);
    let case_id = state.cases.insert(key, image, note);
    Ok((StatusCode::CREATED, Json(UploadResponse { case_id })).into_response())
}

async fn case_view(State(state): State<Arc<AppState>>, Path(case_id): Path<String>) -> Result<Json<CaseView>, ApiError> {
    let case = state.cases.get(&case_id)?;
    Ok(Json(CaseView {
        case_id: case.case_id,
        status: case.status,
        created_at: case.created_at,
        width: case.image.width(),
        height: case.image.height(),
        has_note: case.note.is_some(),
        grade: case.result.as_ref().map(|r| r.grade.label().to_string()),
        cdr_display: case.result.as_ref().map(|r| r.cdr.display.clone()),
        session_id: case.session_id.map(|s| s.to_string()),
        error: case.error,
    }))
}

async fn generate_report(
    State(state): State<Arc<AppState>>,
    Path(case_id): Path<String>,
) -> Result<Json<ReportResponse>, ApiError> {
    let input = state.cases.begin_processing(&case_id)?;
    // The pipeline runs detached so a dropped connection cannot strand the
    // case in PROCESSING.
    let task = {
        let state = state.clone();
        let case_id = case_id.clone();
        tokio::spawn(async move {
            let outcome = tokio::time::timeout(state.report_deadline, state.pipeline.run(&input)).await;
            match outcome {
                Err(_) => {
                    let failure = CaseFailure {
                        stage: DEADLINE_STAGE.into(),
                        message: format!("report generation exceeded {:?}", state.report_deadline),
                    };
                    state.cases.fail(&case_id, failure.clone());
                    Err(failure)
                }
                Ok(Err(e)) => {
                    tracing::warn!(case_id, stage = %e.stage, error = %e.source, "pipeline failed");
                    let failure = stage_failure(e.stage, e.source.to_string());
                    state.cases.fail(&case_id, failure.clone());
                    Err(failure)
                }
                Ok(Ok(result)) => {
                    let session = state
                        .sessions
                        .open_session(&case_id, &result.final_report, &result.core_prompt);
                    let result = Arc::new(result);
                    state.cases.complete(&case_id, result.clone(), session.session_id.clone());
                    Ok((result, session.session_id))
                }
            }
        })
    };
    let outcome = task
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let (result, session_id) = outcome.map_err(ApiError::pipeline)?;
    Ok(Json(ReportResponse {
        case_id,
        grade: result.grade.label().to_string(),
        cdr_display: result.cdr.display.clone(),
        roles: result.roles.roles().to_vec(),
        sub_reports: result.sub_reports.clone(),
        final_report_markdown: result.final_report.markdown.clone(),
        session_id: session_id.to_string(),
    }))
}

async fn chat(
    State(state): State<Arc<AppState>>,
    Path(session_id): Path<String>,
    body: Result<Json<ChatBody>, JsonRejection>,
) -> Result<Json<ChatResponse>, ApiError> {
    let id = SessionId::parse(&session_id).ok_or(SessionError::SessionNotFound)?;
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_request_body", e.body_text()))?;
    let answer = state.sessions.chat(&id, &body.question, &state.chat).await?;
    Ok(Json(ChatResponse { answer }))
}

async fn download_pdf(State(state): State<Arc<AppState>>, Path(case_id): Path<String>) -> Result<Response, ApiError> {
    let (case, result) = state.cases.completed(&case_id)?;
    let transcript = match &case.session_id {
        Some(id) => match state.sessions.transcript(id).await {
            Ok(t) => t,
            Err(SessionError::SessionNotFound) => Vec::new(),
            Err(e) => return Err(e.into()),
        },
        None => Vec::new(),
    };
    let bytes = tokio::task::spawn_blocking(move || {
        pdf::render(&ReportBundle {
            case_id: &case.case_id,
            uploaded_at: case.created_at,
            note: case.note.as_deref(),
            result: &result,
            transcript: &transcript,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "pdf", e.to_string()))?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/pdf".to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"medchat-report-{case_id}.pdf\""),
            ),
        ],
        bytes,
    )
        .into_response())
}

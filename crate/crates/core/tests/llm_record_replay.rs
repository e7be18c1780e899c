use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use medchat_core::llm::{
    ApiKey, ChatBackend, ChatClient, LiveBackend, LlmBackendConfig, LlmError, LlmMode, Message, RecordingBackend,
    ReplayBackend,
};
use medchat_core::retry::RetryPolicy;
use medchat_core::vision::{FundusImage, VisionBackendConfig};
use medchat_core::{CaseInput, Orchestrator, Pipeline};
use serde_json::{json, Value};

#[derive(Clone, Default)]
struct Mock {
    calls: Arc<AtomicUsize>,
    fail_first: usize,
}

/// Deterministic stand-in for a chat-completions server.
async fn completions(State(m): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = m.calls.fetch_add(1, Ordering::SeqCst);
    assert_eq!(headers["authorization"], "Bearer sk-test");
    if n < m.fail_first {
        return (StatusCode::BAD_GATEWAY, Json(json!({})));
    }
    assert_eq!(body["model"], "gpt-4.1");
    assert_eq!(body["temperature"], 0.0);
    let last = body["messages"].as_array().unwrap().last().unwrap()["content"]
        .as_str()
        .unwrap()
        .to_string();
    let content = if last.contains("list between 3 and 5") {
        "ophthalmologist\noptometrist\npharmacist".to_string()
    } else if let Some(i) = last.find("As a ") {
        let role: String = last[i + 5..].chars().take_while(|c| *c != ',').collect();
        format!("Findings from the {role} perspective.")
    } else if last.contains("final comprehensive") {
        "## Impression\nCombined assessment.".to_string()
    } else {
        format!("echo {} chars", last.len())
    };
    (
        StatusCode::OK,
        Json(json!({"choices": [{"message": {"role": "assistant", "content": content}}]})),
    )
}

async fn serve(mock: Mock) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(mock);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn record_config(base: &str, dir: &Path) -> LlmBackendConfig {
    LlmBackendConfig {
        mode: LlmMode::Record,
        base_url: Some(base.to_string()),
        api_key: Some(ApiKey::new("sk-test")),
        fixture_dir: Some(dir.to_path_buf()),
        ..LlmBackendConfig::replay(dir)
    }
}

fn case() -> CaseInput {
    CaseInput {
        key: "case".into(),
        image: FundusImage::from_rgb(64, 64, vec![200; 64 * 64 * 3]).unwrap(),
        note: Some("IOP 28 mmHg OS".into()),
    }
}

fn pipeline(client: ChatClient) -> Pipeline {
    let vision = VisionBackendConfig::stub(0.95, 20.0, 12.0).build().unwrap();
    Pipeline::new(vision, Orchestrator::new(client, 4))
}

fn fixture_names(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[tokio::test]
async fn live_backend_speaks_chat_completions() {
    let url = serve(Mock::default()).await;
    let backend = LiveBackend::new(&url, ApiKey::new("sk-test"), Duration::from_secs(5)).unwrap();
    let client = ChatClient::new(Arc::new(backend), "gpt-4.1", 0.0);
    let c = client.complete(vec![Message::user("hello")]).await.unwrap();
    assert_eq!(c.content, "echo 5 chars");
}

#[tokio::test]
async fn live_backend_retries_server_errors() {
    let mock = Mock {
        fail_first: 2,
        ..Mock::default()
    };
    let calls = mock.calls.clone();
    let url = serve(mock).await;
    let policy = RetryPolicy {
        initial_backoff: Duration::from_millis(5),
        ..RetryPolicy::LLM
    };
    let backend = LiveBackend::new(&url, ApiKey::new("sk-test"), Duration::from_secs(5))
        .unwrap()
        .with_policy(policy);
    let client = ChatClient::new(Arc::new(backend), "gpt-4.1", 0.0);
    client.complete(vec![Message::user("x")]).await.unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn record_twice_yields_identical_request_digests_and_replay_matches() {
    let url = serve(Mock::default()).await;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();

    let first = pipeline(record_config(&url, a.path()).client().unwrap())
        .run(&case())
        .await
        .unwrap();
    let second = pipeline(record_config(&url, b.path()).client().unwrap())
        .run(&case())
        .await
        .unwrap();
    let names = fixture_names(a.path());
    // discovery + 3 roles + director
    assert_eq!(names.len(), 5);
    assert_eq!(names, fixture_names(b.path()));
    assert_eq!(first.final_report.markdown, second.final_report.markdown);

    let replay = LlmBackendConfig::replay(a.path()).client().unwrap();
    let replayed = pipeline(replay).run(&case()).await.unwrap();
    assert_eq!(replayed.final_report, first.final_report);
    assert_eq!(replayed.sub_reports, first.sub_reports);
    assert_eq!(replayed.roles.roles(), ["ophthalmologist", "optometrist", "pharmacist"]);
}

#[tokio::test]
async fn replay_miss_is_loud() {
    let dir = tempfile::tempdir().unwrap();
    let backend = ReplayBackend::new(dir.path());
    let client = ChatClient::new(Arc::new(backend), "gpt-4.1", 0.0);
    let err = client.complete(vec![Message::user("never recorded")]).await.unwrap_err();
    assert!(matches!(err, LlmError::FixtureMiss { .. }));
}

#[tokio::test]
async fn changing_the_prompt_breaks_replay() {
    let url = serve(Mock::default()).await;
    let dir = tempfile::tempdir().unwrap();
    let live: Arc<dyn ChatBackend> =
        Arc::new(LiveBackend::new(&url, ApiKey::new("sk-test"), Duration::from_secs(5)).unwrap());
    let rec = ChatClient::new(Arc::new(RecordingBackend::new(live, dir.path())), "gpt-4.1", 0.0);
    rec.complete(vec![Message::user("exact prompt")]).await.unwrap();

    let replay = ChatClient::new(Arc::new(ReplayBackend::new(dir.path())), "gpt-4.1", 0.0);
    assert_eq!(
        replay.complete(vec![Message::user("exact prompt")]).await.unwrap().content,
        "echo 12 chars"
    );
    assert!(replay.complete(vec![Message::user("exact prompt ")]).await.is_err());
    let other_model = ChatClient::new(Arc::new(ReplayBackend::new(dir.path())), "gpt-4.1-mini", 0.0);
    assert!(other_model.complete(vec![Message::user("exact prompt")]).await.is_err());
}

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use medchat_core::analysis::{compute_cdr, DiagnosticGrade};
use medchat_core::llm::fixture::Fixture;
use medchat_core::llm::{
    ChatBackend, ChatClient, ChatRequest, Completion, LlmError, Message, ReplayBackend, ScriptedBackend,
    ScriptedReply,
};
use medchat_core::orchestration::OrchestrationError;
use medchat_core::prompts::{build_core_prompt, build_director_prompt, build_role_prompt, count_report_blocks};
use medchat_core::vision::MaskCounts;
use medchat_core::{CorePrompt, Orchestrator, RoleSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POOL: [&str; 8] = [
    "ophthalmologist",
    "optometrist",
    "pharmacist",
    "glaucoma specialist",
    "neurologist",
    "retina specialist",
    "primary care physician",
    "clinical geneticist",
];

fn core() -> CorePrompt {
    let cdr = compute_cdr(MaskCounts { cup: 3844, disc: 6156 }).unwrap();
    build_core_prompt(DiagnosticGrade::GlaucomaDetected, &cdr, Some("IOP 28 mmHg OS")).unwrap()
}

fn client_for(backend: Arc<dyn ChatBackend>) -> ChatClient {
    ChatClient::new(backend, "gpt-4.1", 0.0)
}

fn stamp() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2026-10-14T08:00:00.000Z").unwrap().into()
}

fn write_role_fixture(dir: &Path, client: &ChatClient, core: &CorePrompt, role: &str, latency_ms: u64) {
    let prompt = build_role_prompt(core, role).unwrap();
    Fixture {
        request: client.request(vec![Message::user(prompt.text)]),
        completion: format!("Sub-report body written by the {role}."),
        recorded_at: stamp(),
        latency: Duration::from_millis(latency_ms),
    }
    .store(dir)
    .unwrap();
}

/// Records the order in which completions finish.
struct FinishOrder {
    inner: Arc<dyn ChatBackend>,
    order: Mutex<Vec<String>>,
}

#[async_trait]
impl ChatBackend for FinishOrder {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let c = self.inner.complete(request).await?;
        self.order.lock().unwrap().push(c.content.clone());
        Ok(c)
    }
}

#[tokio::test]
async fn output_order_is_role_order_under_permuted_latencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let core = core();
    let mut saw_reordering = false;
    for trial in 0..24 {
        let n = 1 + trial % 6;
        let mut pool = POOL.to_vec();
        pool.shuffle(&mut rng);
        let roles = RoleSet::new(&pool[..n]).unwrap();
        let mut latencies: Vec<u64> = (0..n as u64).map(|i| 5 + 12 * i).collect();
        latencies.shuffle(&mut rng);

        let dir = tempfile::tempdir().unwrap();
        let probe = client_for(Arc::new(ReplayBackend::new(dir.path())));
        for (role, ms) in roles.roles().iter().zip(&latencies) {
            write_role_fixture(dir.path(), &probe, &core, role, *ms);
        }
        let tracker = Arc::new(FinishOrder {
            inner: Arc::new(ReplayBackend::new(dir.path())),
            order: Mutex::new(Vec::new()),
        });
        let orch = Orchestrator::new(client_for(tracker.clone()), 6);
        let reports = orch.generate_sub_reports(&core, &roles).await.unwrap();

        let got: Vec<&str> = reports.iter().map(|r| r.role.as_str()).collect();
        assert_eq!(got, roles.roles(), "trial {trial}");
        for r in &reports {
            assert_eq!(r.text, format!("Sub-report body written by the {}.", r.role));
        }
        let finished = tracker.order.lock().unwrap().clone();
        let in_order: Vec<String> = reports.iter().map(|r| r.text.clone()).collect();
        saw_reordering |= finished != in_order;

        let director = build_director_prompt(&reports, core.has_note).unwrap();
        assert_eq!(count_report_blocks(&director.text), reports.len());
        assert_eq!(director.report_count, reports.len());
    }
    assert!(saw_reordering, "latency permutations never reordered completions");
}

#[tokio::test]
async fn any_withheld_role_fixture_fails_the_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let core = core();
    for n in 1..=6 {
        let roles = RoleSet::new(&POOL[..n]).unwrap();
        let withheld = rng.random_range(0..n);
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(Arc::new(ReplayBackend::new(dir.path()).without_latency()));
        for (i, role) in roles.roles().iter().enumerate() {
            if i != withheld {
                write_role_fixture(dir.path(), &client, &core, role, 0);
            }
        }
        let err = Orchestrator::new(client, 4)
            .generate_sub_reports(&core, &roles)
            .await
            .unwrap_err();
        match err {
            OrchestrationError::PartialAgentFailure { failed } => {
                assert_eq!(failed.len(), 1);
                assert_eq!(failed[0].role, roles.roles()[withheld]);
                assert!(failed[0].reason.contains("no recorded fixture"), "{}", failed[0].reason);
            }
            other => panic!("expected PartialAgentFailure, got {other}"),
        }
    }
}

#[tokio::test]
async fn every_failed_role_is_listed() {
    let core = core();
    let roles = RoleSet::new(&POOL[..5]).unwrap();
    let backend = Arc::new(ScriptedBackend::new(|req| {
        let q = req.last_user()?;
        (!q.contains("As a pharmacist") && !q.contains("As a neurologist")).then(|| ScriptedReply::new("ok"))
    }));
    let err = Orchestrator::new(client_for(backend.clone()), 4)
        .generate_sub_reports(&core, &roles)
        .await
        .unwrap_err();
    let OrchestrationError::PartialAgentFailure { failed } = err else {
        panic!("wrong error");
    };
    let names: Vec<_> = failed.iter().map(|f| f.role.as_str()).collect();
    assert_eq!(names, ["pharmacist", "neurologist"]);
    // No role is silently skipped: every agent was still asked.
    assert_eq!(backend.calls(), 5);
}

#[tokio::test]
async fn blank_sub_report_is_a_failure() {
    let core = core();
    let roles = RoleSet::new(["ophthalmologist", "optometrist"]).unwrap();
    let backend = Arc::new(ScriptedBackend::new(|req| {
        let q = req.last_user()?;
        Some(ScriptedReply::new(if q.contains("optometrist") { "   " } else { "fine" }))
    }));
    let err = Orchestrator::new(client_for(backend), 2)
        .generate_sub_reports(&core, &roles)
        .await
        .unwrap_err();
    assert!(matches!(err, OrchestrationError::PartialAgentFailure { ref failed } if failed[0].role == "optometrist"));
}

/// Tracks the peak number of concurrent calls.
struct Gauge {
    inner: ScriptedBackend,
    now: AtomicUsize,
    peak: AtomicUsize,
}

#[async_trait]
impl ChatBackend for Gauge {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(n, Ordering::SeqCst);
        let r = self.inner.complete(request).await;
        self.now.fetch_sub(1, Ordering::SeqCst);
        r
    }
}

#[tokio::test(start_paused = true)]
async fn fan_out_respects_the_parallelism_bound() {
    let core = core();
    let roles = RoleSet::new(&POOL[..6]).unwrap();
    for bound in 1..=6 {
        let gauge = Arc::new(Gauge {
            inner: ScriptedBackend::new(|_| Some(ScriptedReply::new("r").after(Duration::from_millis(40)))),
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let started = tokio::time::Instant::now();
        Orchestrator::new(client_for(gauge.clone()), bound)
            .generate_sub_reports(&core, &roles)
            .await
            .unwrap();
        assert_eq!(gauge.peak.load(Ordering::SeqCst), bound);
        let waves = 6_u32.div_ceil(bound as u32);
        assert_eq!(started.elapsed(), Duration::from_millis(40) * waves);
    }
}

#[tokio::test]
async fn synthesis_rejects_blank_and_attributed_output() {
    let core = core();
    let reports = vec![medchat_core::SubReport {
        role: "ophthalmologist".into(),
        text: "Thin rim.".into(),
    }];
    let director = build_director_prompt(&reports, core.has_note).unwrap();
    for (reply, expect_ok) in [
        ("  \n ", false),
        ("Report: Thin rim.\nSummary.", false),
        ("## Impression\nThin rim; refer.", true),
    ] {
        let backend = Arc::new(ScriptedBackend::new(move |_| Some(ScriptedReply::new(reply))));
        let result = Orchestrator::new(client_for(backend), 1).synthesize_report(&director).await;
        assert_eq!(result.is_ok(), expect_ok, "{reply:?}");
    }
}

#[tokio::test]
async fn discovery_replay_yields_the_default_roles() {
    let core = core();
    let dir = tempfile::tempdir().unwrap();
    let client = client_for(Arc::new(ReplayBackend::new(dir.path())));
    let backend = Arc::new(ScriptedBackend::new(|req| {
        req.last_user()?
            .starts_with("Given the following diagnostic context")
            .then(|| ScriptedReply::new("Ophthalmologist\nOptometrist\nPharmacist\nGlaucoma Specialist"))
    }));
    let recorder = Arc::new(medchat_core::llm::RecordingBackend::new(backend, dir.path()));
    Orchestrator::new(client_for(recorder), 4).discover_roles(&core).await.unwrap();

    let d = Orchestrator::new(client, 4).discover_roles(&core).await.unwrap();
    assert!(!d.fallback_used);
    assert_eq!(
        d.roles.roles(),
        ["ophthalmologist", "optometrist", "pharmacist", "glaucoma specialist"]
    );
}

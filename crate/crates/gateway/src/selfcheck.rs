//! The shipped fixture case and the offline end-to-end check built on it.
//!
//! The case is a synthetic 200x200 fundus with STUB vision (p = 0.95, disc
//! radius 50, cup radius 31) and a fixed clinical note. Its language-model
//! traffic is recorded under `fixtures/replay`, and the expected
//! [`PipelineResult`] serialization is `fixtures/golden/pipeline_result.json`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use medchat_core::vision::VisionBackendConfig;
use medchat_core::{CaseInput, FundusImage, Orchestrator, Pipeline, PipelineResult};

use crate::config::ServiceConfig;

pub const CASE_KEY: &str = "selfcheck";
pub const CASE_NOTE: &str = "IOP 28 mmHg OS, 19 mmHg OD; family history of glaucoma";
pub const STUB_PROBABILITY: f64 = 0.95;
pub const STUB_DISC_RADIUS: f64 = 50.0;
pub const STUB_CUP_RADIUS: f64 = 31.0;
pub const EDGE: u32 = 200;

/// Follow-up questions with recorded answers, asked in this order.
pub const CHAT_QUESTIONS: [&str; 2] = [
    "What does a cup-to-disc ratio of 0.62 mean for this patient?",
    "Which follow-up tests should be scheduled?",
];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/replay")
}

pub fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden/pipeline_result.json")
}

pub fn vision_config() -> VisionBackendConfig {
    VisionBackendConfig::stub(STUB_PROBABILITY, STUB_DISC_RADIUS, STUB_CUP_RADIUS)
}

pub fn service_config(fixture_dir: impl Into<PathBuf>) -> ServiceConfig {
    ServiceConfig::offline(fixture_dir, vision_config())
}

/// Synthetic fundus: dark red field with a bright, yellowish disc. Integer
/// arithmetic only, so the raster is identical everywhere.
pub fn image() -> FundusImage {
    let mut rgb = Vec::with_capacity((EDGE * EDGE * 3) as usize);
    let c = EDGE as i64;
    for y in 0..EDGE as i64 {
        for x in 0..EDGE as i64 {
            let (dx, dy) = (2 * x + 1 - c, 2 * y + 1 - c);
            let d2 = (dx * dx + dy * dy) / 4;
            let glow = (255 - (d2 / 40).min(255)) as u8;
            rgb.extend([120u8.saturating_add(glow / 2), 30 + glow / 3, 20 + glow / 8]);
        }
    }
    FundusImage::from_rgb(EDGE, EDGE, rgb).expect("valid raster")
}

pub fn case() -> CaseInput {
    CaseInput {
        key: CASE_KEY.into(),
        image: image(),
        note: Some(CASE_NOTE.into()),
    }
}

pub fn pipeline(fixture_dir: &Path) -> anyhow::Result<Pipeline> {
    let cfg = service_config(fixture_dir);
    let client = cfg.llm.client()?;
    Ok(Pipeline::new(
        cfg.vision.build()?,
        Orchestrator::new(client, cfg.llm.max_parallel_agents),
    ))
}

#[derive(Debug)]
pub struct Outcome {
    pub first: String,
    pub second: String,
    pub golden: Option<String>,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn runs_agree(&self) -> bool {
        self.first == self.second
    }

    pub fn matches_golden(&self) -> bool {
        self.golden.as_deref() == Some(self.first.as_str())
    }

    pub fn passed(&self) -> bool {
        self.runs_agree() && self.matches_golden()
    }

    /// First differing line between the run and the golden file.
    pub fn describe_mismatch(&self) -> Option<String> {
        if !self.runs_agree() {
            return Some(format!("runs differ: {}", first_difference(&self.first, &self.second)));
        }
        match &self.golden {
            None => Some("golden file missing".into()),
            Some(g) if g != &self.first => Some(format!("golden differs: {}", first_difference(g, &self.first))),
            Some(_) => None,
        }
    }
}

fn first_difference(a: &str, b: &str) -> String {
    for (i, (x, y)) in a.lines().zip(b.lines()).enumerate() {
        if x != y {
            return format!("line {}: expected {x:?}, got {y:?}", i + 1);
        }
    }
    format!("lengths {} vs {} lines", a.lines().count(), b.lines().count())
}

pub async fn run_once(fixture_dir: &Path) -> anyhow::Result<PipelineResult> {
    Ok(pipeline(fixture_dir)?.run(&case()).await?)
}

/// Runs the fixture case twice from scratch and compares both
/// serializations with each other and with the golden file.
pub async fn run(fixture_dir: &Path, golden: &Path) -> anyhow::Result<Outcome> {
    let started = Instant::now();
    let first = run_once(fixture_dir).await?.to_canonical_json();
    let second = run_once(fixture_dir).await?.to_canonical_json();
    let golden = match std::fs::read_to_string(golden) {
        Ok(g) => Some(g),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(anyhow::anyhow!("{}: {e}", golden.display())),
    };
    Ok(Outcome {
        first,
        second,
        golden,
        elapsed: started.elapsed(),
    })
}

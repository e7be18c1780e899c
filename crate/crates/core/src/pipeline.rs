//! End-to-end case pipeline: vision, evidence, role agents, director.

use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, CdrResult, DiagnosticGrade, OverlayImage};
use crate::orchestration::{FinalReport, OrchestrationError, Orchestrator, RoleSet, SubReport};
use crate::prompts::{self, CorePrompt, PromptError};
use crate::vision::{self, FundusImage, VisionBackend, VisionError, VisionRequest};

/// Pipeline stages, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Segment,
    ExtractMasks,
    ComputeCdr,
    Grade,
    BuildCorePrompt,
    DiscoverRoles,
    BuildRolePrompt,
    GenerateSubReports,
    BuildDirectorPrompt,
    SynthesizeReport,
    RenderOverlay,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Self::Classify => "classify",
            Self::Segment => "segment",
            Self::ExtractMasks => "extract_masks",
            Self::ComputeCdr => "compute_cdr",
            Self::Grade => "grade",
            Self::BuildCorePrompt => "build_core_prompt",
            Self::DiscoverRoles => "discover_roles",
            Self::BuildRolePrompt => "build_role_prompt",
            Self::GenerateSubReports => "generate_sub_reports",
            Self::BuildDirectorPrompt => "build_director_prompt",
            Self::SynthesizeReport => "synthesize_report",
            Self::RenderOverlay => "render_overlay",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Orchestration(#[from] OrchestrationError),
}

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// One case as the pipeline sees it.
#[derive(Debug, Clone)]
pub struct CaseInput {
    /// Sidecar lookup key for precomputed vision outputs.
    pub key: String,
    pub image: FundusImage,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlaySummary {
    pub width: u32,
    pub height: u32,
    pub rgb_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResult {
    pub probability: f64,
    pub grade: DiagnosticGrade,
    pub cdr: CdrResult,
    pub core_prompt: CorePrompt,
    pub roles: RoleSet,
    pub roles_fallback_used: bool,
    pub sub_reports: Vec<SubReport>,
    pub final_report: FinalReport,
    #[serde(rename = "overlay")]
    pub overlay_summary: OverlaySummary,
    #[serde(skip)]
    pub overlay: OverlayImage,
}

impl PipelineResult {
    /// Canonical pretty JSON; stable across runs and machines for equal
    /// inputs under deterministic backends.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("pipeline result serializes");
        s.push('\n');
        s
    }
}

/// Vision adapters plus the agent orchestrator; shareable across cases.
#[derive(Clone)]
pub struct Pipeline {
    vision: Arc<dyn VisionBackend>,
    orchestrator: Orchestrator,
}

impl Pipeline {
    pub fn new(vision: Arc<dyn VisionBackend>, orchestrator: Orchestrator) -> Self {
        Self {
            vision,
            orchestrator,
        }
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    pub async fn run(&self, case: &CaseInput) -> Result<PipelineResult, PipelineError> {
        let request = VisionRequest {
            key: &case.key,
            image: &case.image,
        };
        let (classified, segmented) =
            tokio::join!(self.vision.classify(request), self.vision.segment(request));
        let classified = classified.at(Stage::Classify)?;
        let map = segmented.at(Stage::Segment)?;

        let counts = vision::extract_masks(&map);
        let cdr = analysis::compute_cdr(counts).at(Stage::ComputeCdr)?;
        let grade = analysis::grade(classified.probability).at(Stage::Grade)?;
        let core = prompts::build_core_prompt(grade, &cdr, case.note.as_deref()).at(Stage::BuildCorePrompt)?;

        let discovery = self
            .orchestrator
            .discover_roles(&core)
            .await
            .at(Stage::DiscoverRoles)?;
        for role in discovery.roles.roles() {
            prompts::build_role_prompt(&core, role).at(Stage::BuildRolePrompt)?;
        }
        let sub_reports = self
            .orchestrator
            .generate_sub_reports(&core, &discovery.roles)
            .await
            .at(Stage::GenerateSubReports)?;
        let director =
            prompts::build_director_prompt(&sub_reports, core.has_note).at(Stage::BuildDirectorPrompt)?;
        let final_report = self
            .orchestrator
            .synthesize_report(&director)
            .await
            .at(Stage::SynthesizeReport)?;
        let overlay = analysis::render_overlay(&case.image, &map).at(Stage::RenderOverlay)?;

        Ok(PipelineResult {
            probability: classified.probability,
            grade,
            cdr,
            core_prompt: core,
            roles: discovery.roles,
            roles_fallback_used: discovery.fallback_used,
            sub_reports,
            final_report,
            overlay_summary: OverlaySummary {
                width: overlay.width,
                height: overlay.height,
                rgb_sha256: hex::encode(Sha256::digest(&overlay.rgb)),
            },
            overlay,
        })
    }
}

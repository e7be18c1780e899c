//! Glaucoma screening pipeline: fundus vision adapters, deterministic
//! evidence (grade and cup-to-disc ratio), prompt construction, multi-agent
//! report orchestration, and grounded follow-up chat.

pub mod analysis;
pub mod kernels;
pub mod llm;
pub mod orchestration;
pub mod pipeline;
pub mod prompts;
pub mod retry;
pub mod session;
pub mod vision;

pub use analysis::{CdrResult, DiagnosticGrade, OverlayImage};
pub use orchestration::{FinalReport, Orchestrator, RoleSet, SubReport};
pub use pipeline::{CaseInput, Pipeline, PipelineError, PipelineResult, Stage};
pub use prompts::CorePrompt;
pub use session::{ChatSession, SessionId, SessionStore};
pub use vision::{FundusImage, VisionBackend, VisionBackendConfig};

//! Uploaded cases and their lifecycle.
//!
//! ```text
//! UPLOADED -> PROCESSING -> COMPLETE
//!                  |
//!                  +------> FAILED -> PROCESSING (retry)
//! ```

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use medchat_core::session::SessionId;
use medchat_core::{CaseInput, FundusImage, PipelineResult, Stage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseStatus {
    Uploaded,
    Processing,
    Complete,
    Failed,
}

impl CaseStatus {
    /// The only permitted transitions.
    pub fn can_move_to(self, next: CaseStatus) -> bool {
        use CaseStatus::*;
        matches!(
            (self, next),
            (Uploaded, Processing) | (Processing, Complete) | (Processing, Failed) | (Failed, Processing)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFailure {
    /// Pipeline stage name, or `deadline` when the request budget ran out.
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct FundusCase {
    pub case_id: String,
    /// Sidecar key for precomputed vision outputs (the upload's file stem).
    pub key: String,
    pub image: FundusImage,
    pub note: Option<String>,
    pub status: CaseStatus,
    pub result: Option<Arc<PipelineResult>>,
    pub error: Option<CaseFailure>,
    pub session_id: Option<SessionId>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CaseError {
    #[error("case not found")]
    NotFound,
    #[error("report generation already in progress")]
    AlreadyProcessing,
    #[error("report already generated")]
    AlreadyComplete,
    #[error("case has no completed report")]
    NotReady,
}

#[derive(Default)]
pub struct CaseStore {
    cases: RwLock<HashMap<String, FundusCase>>,
}

impl CaseStore {
    pub fn insert(&self, key: String, image: FundusImage, note: Option<String>) -> String {
        let mut cases = self.cases.write().expect("case lock");
        let case_id = loop {
            let id = uuid::Uuid::new_v4().simple().to_string();
            if !cases.contains_key(&id) {
                break id;
            }
        };
        cases.insert(
            case_id.clone(),
            FundusCase {
                case_id: case_id.clone(),
                key,
                image,
                note,
                status: CaseStatus::Uploaded,
                result: None,
                error: None,
                session_id: None,
                created_at: Utc::now(),
            },
        );
        case_id
    }

    pub fn get(&self, case_id: &str) -> Result<FundusCase, CaseError> {
        self.cases
            .read()
            .expect("case lock")
            .get(case_id)
            .cloned()
            .ok_or(CaseError::NotFound)
    }

    pub fn len(&self) -> usize {
        self.cases.read().expect("case lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Claims the case for report generation. Exactly one concurrent caller
    /// wins; the rest see `AlreadyProcessing`.
    pub fn begin_processing(&self, case_id: &str) -> Result<CaseInput, CaseError> {
        let mut cases = self.cases.write().expect("case lock");
        let case = cases.get_mut(case_id).ok_or(CaseError::NotFound)?;
        match case.status {
            CaseStatus::Processing => return Err(CaseError::AlreadyProcessing),
            CaseStatus::Complete => return Err(CaseError::AlreadyComplete),
            CaseStatus::Uploaded | CaseStatus::Failed => {}
        }
        debug_assert!(case.status.can_move_to(CaseStatus::Processing));
        case.status = CaseStatus::Processing;
        case.error = None;
        Ok(CaseInput {
            key: case.key.clone(),
            image: case.image.clone(),
            note: case.note.clone(),
        })
    }

    pub fn complete(&self, case_id: &str, result: Arc<PipelineResult>, session_id: SessionId) {
        self.finish(case_id, CaseStatus::Complete, |case| {
            case.result = Some(result);
            case.session_id = Some(session_id);
        });
    }

    pub fn fail(&self, case_id: &str, failure: CaseFailure) {
        self.finish(case_id, CaseStatus::Failed, |case| case.error = Some(failure));
    }

    fn finish(&self, case_id: &str, next: CaseStatus, update: impl FnOnce(&mut FundusCase)) {
        let mut cases = self.cases.write().expect("case lock");
        let Some(case) = cases.get_mut(case_id) else {
            return;
        };
        if !case.status.can_move_to(next) {
            tracing::error!(case_id, from = ?case.status, to = ?next, "refusing invalid case transition");
            return;
        }
        case.status = next;
        update(case);
    }

    /// Result and session of a completed case.
    pub fn completed(&self, case_id: &str) -> Result<(FundusCase, Arc<PipelineResult>), CaseError> {
        let case = self.get(case_id)?;
        match (&case.status, &case.result) {
            (CaseStatus::Complete, Some(r)) => {
                let r = r.clone();
                Ok((case, r))
            }
            _ => Err(CaseError::NotReady),
        }
    }
}

pub fn stage_failure(stage: Stage, message: impl Into<String>) -> CaseFailure {
    CaseFailure {
        stage: stage.name().to_string(),
        message: message.into(),
    }
}

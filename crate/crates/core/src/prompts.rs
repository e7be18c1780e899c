//! Byte-exact construction of the prompts sent to the language model.
//!
//! Three families share one set of embedded templates (see
//! `src/templates/MANIFEST.md`): the case evidence every agent receives, the
//! role-scoped agent prompt, and the director synthesis prompt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{CdrResult, DiagnosticGrade};
use crate::orchestration::SubReport;

const CORE_EVIDENCE: &str = include_str!("templates/core_evidence.txt");
const CORE_NOTE: &str = include_str!("templates/core_note.txt");
const ROLE_INSTRUCTIONS: &str = include_str!("templates/role_instructions.txt");
const DIRECTOR_PREAMBLE: &str = include_str!("templates/director_preamble.txt");
const DIRECTOR_CLOSING: &str = include_str!("templates/director_closing.txt");
pub(crate) const ROLE_DISCOVERY: &str = include_str!("templates/role_discovery.txt");
pub(crate) const CHAT_SYSTEM: &str = include_str!("templates/chat_system.txt");

/// Line prefix that opens each sub-report block in the director prompt.
pub const REPORT_PREFIX: &str = "Report:";

/// Separator before instruction blocks and between director blocks.
const BLOCK_BREAK: &str = "\n\n";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("clinician note is present but blank")]
    EmptyNote,
    #[error("role name is empty")]
    EmptyRole,
    #[error("director prompt needs at least one sub-report")]
    NoSubReports,
}

/// Phrase used for `grade` inside the case evidence.
pub fn grade_phrase(grade: DiagnosticGrade) -> &'static str {
    match grade {
        DiagnosticGrade::NoGlaucoma => "no signs of glaucoma",
        DiagnosticGrade::PossibleGlaucoma => "possible signs of glaucoma",
        DiagnosticGrade::LikelyGlaucoma => "likely signs of glaucoma",
        DiagnosticGrade::GlaucomaDetected => "definitive signs of glaucoma detected",
    }
}

/// Shared case evidence given to every agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorePrompt {
    pub text: String,
    pub grade: DiagnosticGrade,
    pub cdr_display: String,
    pub has_note: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePrompt {
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectorPrompt {
    pub text: String,
    pub report_count: usize,
    pub has_note: bool,
}

pub fn build_core_prompt(
    grade: DiagnosticGrade,
    cdr: &CdrResult,
    note: Option<&str>,
) -> Result<CorePrompt, PromptError> {
    let note = match note {
        Some(n) if n.trim().is_empty() => return Err(PromptError::EmptyNote),
        Some(n) => Some(n.trim()),
        None => None,
    };
    let mut text = CORE_EVIDENCE
        .replacen("{grade_phrase}", grade_phrase(grade), 1)
        .replacen("{cdr}", &cdr.display, 1);
    if let Some(note) = note {
        text.push_str(&CORE_NOTE.replacen("{note}", note, 1));
    }
    Ok(CorePrompt {
        text,
        grade,
        cdr_display: cdr.display.clone(),
        has_note: note.is_some(),
    })
}

pub fn build_role_prompt(core: &CorePrompt, role: &str) -> Result<RolePrompt, PromptError> {
    let role = role.trim();
    if role.is_empty() {
        return Err(PromptError::EmptyRole);
    }
    let mut text = String::with_capacity(core.text.len() + ROLE_INSTRUCTIONS.len() + 32);
    text.push_str(&core.text);
    text.push_str(BLOCK_BREAK);
    text.push_str(&ROLE_INSTRUCTIONS.replacen("{role}", role, 1));
    Ok(RolePrompt {
        role: role.to_string(),
        text,
    })
}

/// Assembles the director prompt from sub-reports, in order. Role names are
/// not included. A sub-report line that itself begins with `Report:` is
/// rewritten to `Report -` so block boundaries stay unambiguous.
pub fn build_director_prompt(
    sub_reports: &[SubReport],
    has_note: bool,
) -> Result<DirectorPrompt, PromptError> {
    if sub_reports.is_empty() {
        return Err(PromptError::NoSubReports);
    }
    let mut text = String::from(DIRECTOR_PREAMBLE);
    text.push_str(if has_note { ", and a clinical note." } else { "." });
    for report in sub_reports {
        text.push_str(BLOCK_BREAK);
        text.push_str(REPORT_PREFIX);
        text.push(' ');
        text.push_str(&neutralize_block_markers(report.text.trim()));
    }
    text.push_str(BLOCK_BREAK);
    text.push_str(DIRECTOR_CLOSING);
    Ok(DirectorPrompt {
        text,
        report_count: sub_reports.len(),
        has_note,
    })
}

fn neutralize_block_markers(body: &str) -> String {
    body.split('\n')
        .map(|line| match line.strip_prefix(REPORT_PREFIX) {
            Some(rest) => format!("Report -{rest}"),
            None => line.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Number of lines beginning with `Report:`.
pub fn count_report_blocks(text: &str) -> usize {
    text.lines().filter(|l| l.starts_with(REPORT_PREFIX)).count()
}

pub(crate) fn role_discovery_prompt(core: &CorePrompt) -> String {
    ROLE_DISCOVERY.replacen("{core_prompt}", &core.text, 1)
}

pub(crate) fn chat_system_prompt(core_text: &str, report_markdown: &str) -> String {
    // Substitute the report into its own half so report text containing
    // `{core_prompt}` is left alone.
    let (head, tail) = CHAT_SYSTEM
        .split_once("{report}")
        .expect("chat template has a report slot");
    let mut out = head.replacen("{core_prompt}", core_text, 1);
    out.push_str(report_markdown);
    out.push_str(tail);
    out
}

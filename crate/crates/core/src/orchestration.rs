//! Role discovery, concurrent role-agent fan-out, and director synthesis.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::llm::{ChatClient, LlmError, Message};
use crate::prompts::{self, CorePrompt, DirectorPrompt};

/// At most this many roles are kept from discovery.
pub const MAX_ROLES: usize = 6;

const MAX_ROLE_CHARS: usize = 60;
const MAX_ROLE_WORDS: usize = 5;

/// Used when discovery output cannot be parsed into any role.
pub const FALLBACK_ROLES: [&str; 4] = [
    "ophthalmologist",
    "optometrist",
    "pharmacist",
    "glaucoma specialist",
];

#[derive(Debug, Error)]
pub enum OrchestrationError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("role agents failed: {}", describe_failures(.failed))]
    PartialAgentFailure { failed: Vec<FailedRole> },
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("final report copies a `Report:` source block")]
    SourceAttribution,
    #[error(transparent)]
    Prompt(#[from] prompts::PromptError),
    #[error("invalid role set: {0}")]
    InvalidRoles(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedRole {
    pub role: String,
    pub reason: String,
}

fn describe_failures(failed: &[FailedRole]) -> String {
    failed
        .iter()
        .map(|f| format!("{} ({})", f.role, f.reason))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Distinct, lowercase, non-empty role names; 1 to [`MAX_ROLES`] entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleSet(Vec<String>);

impl RoleSet {
    /// Normalizes (trim, lowercase), drops duplicates and blanks, truncates.
    pub fn new<I, S>(roles: I) -> Result<Self, OrchestrationError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for role in roles {
            let r = role.as_ref().trim().to_lowercase();
            if !r.is_empty() && !out.contains(&r) {
                out.push(r);
            }
        }
        out.truncate(MAX_ROLES);
        if out.is_empty() {
            return Err(OrchestrationError::InvalidRoles("no roles".into()));
        }
        Ok(Self(out))
    }

    pub fn fallback() -> Self {
        Self(FALLBACK_ROLES.iter().map(|s| s.to_string()).collect())
    }

    pub fn roles(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, role: &str) -> bool {
        self.0.iter().any(|r| r == role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDiscovery {
    pub roles: RoleSet,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubReport {
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalReport {
    pub markdown: String,
    pub generated_at: DateTime<Utc>,
}

/// One line of discovery output reduced to a role name, or `None` if the
/// line does not look like one (headers, sentences, JSON, ...).
fn parse_role_line(line: &str) -> Option<String> {
    let mut s = line.trim();
    // Tolerate list markup even though the request asks for none.
    s = s.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        if let Some(rest) = s[digits..].strip_prefix(['.', ')']) {
            s = rest.trim_start();
        }
    }
    let s = s.trim_end_matches(['.', ',', ';']).trim().to_lowercase();
    if s.is_empty() || s.chars().count() > MAX_ROLE_CHARS {
        return None;
    }
    if s.split_whitespace().count() > MAX_ROLE_WORDS {
        return None;
    }
    let ok = s
        .chars()
        .all(|c| c.is_alphabetic() || matches!(c, ' ' | '-' | '\'' | '/' | '(' | ')' | '&'));
    ok.then_some(s)
}

/// Parses a discovery completion. Falls back to [`FALLBACK_ROLES`] when no
/// line yields a role.
pub fn parse_roles(completion: &str) -> RoleDiscovery {
    let parsed: Vec<String> = completion.lines().filter_map(parse_role_line).collect();
    match RoleSet::new(parsed) {
        Ok(roles) => RoleDiscovery {
            roles,
            fallback_used: false,
        },
        Err(_) => RoleDiscovery {
            roles: RoleSet::fallback(),
            fallback_used: true,
        },
    }
}

/// Drives the three language-model stages of a case. Cheap to clone and
/// safe to share across concurrent cases; holds no per-case state.
#[derive(Debug, Clone)]
pub struct Orchestrator {
    client: ChatClient,
    max_parallel_agents: usize,
}

impl Orchestrator {
    pub fn new(client: ChatClient, max_parallel_agents: usize) -> Self {
        Self {
            client,
            max_parallel_agents: max_parallel_agents.max(1),
        }
    }

    pub fn client(&self) -> &ChatClient {
        &self.client
    }

    pub async fn discover_roles(&self, core: &CorePrompt) -> Result<RoleDiscovery, OrchestrationError> {
        let prompt = prompts::role_discovery_prompt(core);
        let completion = self.client.complete(vec![Message::user(prompt)]).await?;
        let discovery = parse_roles(&completion.content);
        if discovery.fallback_used {
            tracing::warn!("role discovery output unparseable, using fallback roles");
        }
        Ok(discovery)
    }

    /// One independent completion per role, at most `max_parallel_agents` in
    /// flight. Output follows `roles` order. Any failed role fails the whole
    /// fan-out with every failed role listed.
    pub async fn generate_sub_reports(
        &self,
        core: &CorePrompt,
        roles: &RoleSet,
    ) -> Result<Vec<SubReport>, OrchestrationError> {
        let prompts = roles
            .roles()
            .iter()
            .map(|role| prompts::build_role_prompt(core, role))
            .collect::<Result<Vec<_>, _>>()?;
        let permits = Arc::new(Semaphore::new(self.max_parallel_agents));
        let calls = prompts.into_iter().map(|prompt| {
            let permits = Arc::clone(&permits);
            async move {
                let _permit = permits.acquire_owned().await.expect("semaphore never closed");
                let result = self.client.complete(vec![Message::user(prompt.text)]).await;
                (prompt.role, result)
            }
        });
        let mut reports = Vec::with_capacity(roles.len());
        let mut failed = Vec::new();
        for (role, result) in join_all(calls).await {
            match result {
                Ok(c) if !c.content.trim().is_empty() => reports.push(SubReport {
                    role,
                    text: c.content.trim().to_string(),
                }),
                Ok(_) => failed.push(FailedRole {
                    role,
                    reason: "empty completion".into(),
                }),
                Err(e) => failed.push(FailedRole {
                    role,
                    reason: e.to_string(),
                }),
            }
        }
        if !failed.is_empty() {
            return Err(OrchestrationError::PartialAgentFailure { failed });
        }
        Ok(reports)
    }

    pub async fn synthesize_report(&self, director: &DirectorPrompt) -> Result<FinalReport, OrchestrationError> {
        let completion = self
            .client
            .complete(vec![Message::user(director.text.clone())])
            .await?;
        let markdown = completion.content.trim();
        if markdown.is_empty() {
            return Err(OrchestrationError::EmptyCompletion);
        }
        if prompts::count_report_blocks(markdown) > 0 {
            return Err(OrchestrationError::SourceAttribution);
        }
        Ok(FinalReport {
            markdown: markdown.to_string(),
            generated_at: completion.recorded_at.unwrap_or_else(Utc::now),
        })
    }
}

//! Service configuration: a TOML file plus `MEDCHAT_*` environment overrides.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! max_upload_bytes = 10485760
//!
//! [vision]
//! mode = "stub"
//! stub_probability = 0.95
//! stub_geometry = { disc_radius = 50.0, cup_radius = 31.0 }
//!
//! [llm]
//! mode = "replay"
//! fixture_dir = "fixtures/replay"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use medchat_core::llm::{ApiKey, LlmBackendConfig};
use medchat_core::session::{SessionStoreConfig, DEFAULT_MAX_MESSAGES};
use medchat_core::vision::{VisionBackendConfig, VisionMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_LLM_BASE_URL: &str = "MEDCHAT_LLM_BASE_URL";
pub const ENV_LLM_API_KEY: &str = "MEDCHAT_LLM_API_KEY";
pub const ENV_MODEL: &str = "MEDCHAT_MODEL";
pub const ENV_VISION_MODE: &str = "MEDCHAT_VISION_MODE";
pub const ENV_LISTEN: &str = "MEDCHAT_LISTEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}
fn default_max_upload() -> usize {
    10 * 1024 * 1024
}
fn default_ttl() -> u64 {
    24 * 60 * 60
}
fn default_max_messages() -> usize {
    DEFAULT_MAX_MESSAGES
}
fn default_deadline() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub vision: VisionBackendConfig,
    pub llm: LlmBackendConfig,
    #[serde(default = "default_max_upload")]
    pub max_upload_bytes: usize,
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    #[serde(default = "default_max_messages")]
    pub session_max_messages: usize,
    /// Directory for file-backed session persistence; in-memory when absent.
    #[serde(default)]
    pub persistence_path: Option<PathBuf>,
    /// Built console assets served under `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default = "default_deadline")]
    pub report_deadline_secs: u64,
}

impl ServiceConfig {
    /// STUB vision and REPLAY language model; fully offline.
    pub fn offline(fixture_dir: impl Into<PathBuf>, vision: VisionBackendConfig) -> Self {
        Self {
            listen: default_listen(),
            vision,
            llm: LlmBackendConfig::replay(fixture_dir),
            max_upload_bytes: default_max_upload(),
            session_ttl_secs: default_ttl(),
            session_max_messages: default_max_messages(),
            persistence_path: None,
            static_dir: None,
            report_deadline_secs: default_deadline(),
        }
    }

    /// Reads, overrides from the process environment, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::load_with_env(path, |k| std::env::var(k).ok())
    }

    pub fn load_with_env(path: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.apply_env(env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.llm.fixture_dir);
        fix(&mut self.vision.sidecar_dir);
        fix(&mut self.persistence_path);
        fix(&mut self.static_dir);
    }

    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = env(ENV_LLM_BASE_URL) {
            self.llm.base_url = Some(v);
        }
        if let Some(v) = env(ENV_LLM_API_KEY) {
            self.llm.api_key = Some(ApiKey::new(v));
        }
        if let Some(v) = env(ENV_MODEL) {
            self.llm.model_name = v;
        }
        if let Some(v) = env(ENV_VISION_MODE) {
            self.vision.mode = v
                .parse::<VisionMode>()
                .map_err(|e| ConfigError::Invalid(format!("{ENV_VISION_MODE}: {e}")))?;
        }
        if let Some(v) = env(ENV_LISTEN) {
            self.listen = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_addr()?;
        self.vision
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[vision] {e}")))?;
        self.llm
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[llm] {e}")))?;
        if self.max_upload_bytes == 0 {
            return Err(ConfigError::Invalid("max_upload_bytes must be positive".into()));
        }
        if self.session_ttl_secs == 0 {
            return Err(ConfigError::Invalid("session_ttl_secs must be positive".into()));
        }
        if self.session_max_messages < 2 {
            return Err(ConfigError::Invalid("session_max_messages must be at least 2".into()));
        }
        if self.report_deadline_secs == 0 {
            return Err(ConfigError::Invalid("report_deadline_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("listen address `{}`: {e}", self.listen)))
    }

    pub fn session_store_config(&self) -> SessionStoreConfig {
        SessionStoreConfig {
            ttl: Duration::from_secs(self.session_ttl_secs),
            max_messages: self.session_max_messages,
        }
    }

    pub fn report_deadline(&self) -> Duration {
        Duration::from_secs(self.report_deadline_secs)
    }
}

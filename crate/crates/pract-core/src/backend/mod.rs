//! Text-generation backends: a real chat-completion HTTP client and a
//! deterministic scripted backend for tests and offline runs.
//!
//! One backend instance is created per role (executor / reflector /
//! optimizer) so that call counts and scripts stay per-role. Instances are
//! shared behind `Arc` and tolerate concurrent [`Backend::complete`] calls;
//! counting stays exact under concurrency.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod http;
mod scripted;

pub use http::HttpBackend;
pub use scripted::{load_script, MatchRule, ScriptRule, ScriptedBackend};

/// Environment variable holding the API key for HTTP backends.
pub const API_KEY_ENV: &str = "PRACT_API_KEY";

/// One chat turn sent to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

/// Configuration slot for one backend role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub script_path: Option<PathBuf>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_max_output_tokens() -> u32 {
    1024
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

impl BackendConfig {
    pub fn scripted(script_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint_url: None,
            model_name: None,
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            script_path: Some(script_path.into()),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn http(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_name: Some(model_name.into()),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            script_path: None,
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Http => {
                if self.endpoint_url.is_none() || self.model_name.is_none() {
                    return Err(BackendError::InvalidConfig(
                        "http backend requires endpoint_url and model_name".into(),
                    ));
                }
            }
            BackendKind::Scripted => {
                if self.script_path.is_none() {
                    return Err(BackendError::InvalidConfig(
                        "scripted backend requires script_path".into(),
                    ));
                }
            }
        }
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidConfig(
                "temperature must be >= 0".into(),
            ));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidConfig(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("no script rule matches the rendered prompt:\n{prompt}")]
    NoScriptMatch { prompt: String },
    #[error("invalid script rule {index}: {message}")]
    InvalidScript { index: usize, message: String },
    #[error("failed to read script {path}: {source}")]
    ScriptIo {
        path: String,
        source: std::io::Error,
    },
    #[error("missing API key: set the {API_KEY_ENV} environment variable")]
    MissingApiKey,
    #[error("http request failed after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("http status {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("messages must be non-empty")]
    EmptyMessages,
}

/// A text-generation engine. Implementations never mutate the message list
/// and count every `complete` invocation.
pub trait Backend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;

    /// Exact number of `complete` invocations since construction.
    fn call_count(&self) -> u64;
}

/// Builds a backend from its config. Relative script paths are resolved
/// against `base_dir`.
pub fn build_backend(
    cfg: &BackendConfig,
    base_dir: &Path,
) -> Result<Arc<dyn Backend>, BackendError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::Scripted => {
            let raw = cfg.script_path.as_ref().expect("validated");
            let path = if raw.is_absolute() {
                raw.clone()
            } else {
                base_dir.join(raw)
            };
            let rules = load_script(&path)?;
            Ok(Arc::new(ScriptedBackend::new(rules)?))
        }
        BackendKind::Http => Ok(Arc::new(HttpBackend::from_env(cfg)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_config_requires_endpoint_and_model() {
        let mut cfg = BackendConfig::http("http://localhost/v1/chat/completions", "m");
        assert!(cfg.validate().is_ok());
        cfg.model_name = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scripted_config_requires_script_path() {
        let mut cfg = BackendConfig::scripted("script.json");
        assert!(cfg.validate().is_ok());
        cfg.script_path = None;
        assert!(cfg.validate().is_err());
    }
}

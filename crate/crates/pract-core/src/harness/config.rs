//! Run configuration: one TOML file mirroring every knob of an
//! optimization run. Relative paths are resolved against the config file's
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::BackendConfig;
use crate::executor::{AgentMode, ExecutorConfig};
use crate::reflection::ReflectorConfig;
use crate::rpo::{RpoConfig, RpoMethod};
use crate::template;
use crate::types::ReflectorMode;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateIds {
    #[serde(default = "default_executor_template")]
    pub executor: String,
    #[serde(default = "default_reflector_template")]
    pub reflector: String,
    #[serde(default = "default_optimizer_template")]
    pub optimizer: String,
    #[serde(default = "default_summarizer_template")]
    pub summarizer: String,
    #[serde(default = "default_concat_template")]
    pub concat: String,
}

fn default_executor_template() -> String {
    template::EXECUTOR_TEMPLATE_ID.to_string()
}
fn default_reflector_template() -> String {
    template::REFLECTOR_TEMPLATE_ID.to_string()
}
fn default_optimizer_template() -> String {
    template::OPTIMIZER_TEMPLATE_ID.to_string()
}
fn default_summarizer_template() -> String {
    template::SUMMARIZER_TEMPLATE_ID.to_string()
}
fn default_concat_template() -> String {
    template::CONCAT_TEMPLATE_ID.to_string()
}

impl Default for TemplateIds {
    fn default() -> Self {
        Self {
            executor: default_executor_template(),
            reflector: default_reflector_template(),
            optimizer: default_optimizer_template(),
            summarizer: default_summarizer_template(),
            concat: default_concat_template(),
        }
    }
}

/// Backend configuration per agent role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleBackendConfigs {
    pub executor: BackendConfig,
    pub reflector: BackendConfig,
    pub optimizer: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Task suite file produced by the suite generator.
    pub suite: PathBuf,
    pub mode: AgentMode,
    pub reflector: ReflectorMode,
    pub rpo: RpoMethod,
    pub batch_size: usize,
    pub max_iters: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: (u32, u32, u32),
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_parse_retries")]
    pub parse_retries: usize,
    #[serde(default = "default_history_char_budget")]
    pub history_char_budget: usize,
    #[serde(default = "default_max_reflection_chars")]
    pub max_reflection_chars: usize,
    #[serde(default = "default_max_principle_chars")]
    pub max_principle_chars: usize,
    #[serde(default)]
    pub templates: TemplateIds,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    /// Optional principle document used as version 0; defaults to a seed
    /// set derived from the action descriptions.
    #[serde(default)]
    pub seed_principles: Option<PathBuf>,
    pub backends: RoleBackendConfigs,
    pub output_dir: PathBuf,
}

fn default_patience() -> usize {
    3
}
fn default_split_ratio() -> (u32, u32, u32) {
    (3, 1, 1)
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_workers() -> usize {
    1
}
fn default_max_steps() -> usize {
    10
}
fn default_parse_retries() -> usize {
    2
}
fn default_history_char_budget() -> usize {
    16_000
}
fn default_max_reflection_chars() -> usize {
    4000
}
fn default_max_principle_chars() -> usize {
    1500
}

impl RunConfig {
    /// Parses a TOML config file and resolves its relative paths against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| HarnessError::InvalidConfig {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate().map_err(|message| HarnessError::InvalidConfig {
            path: path.display().to_string(),
            message,
        })?;
        Ok(cfg)
    }

    /// Rewrites relative paths to be rooted at `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.suite);
        resolve(&mut self.output_dir);
        if let Some(dir) = self.template_dir.as_mut() {
            resolve(dir);
        }
        if let Some(p) = self.seed_principles.as_mut() {
            resolve(p);
        }
        for backend in [
            &mut self.backends.executor,
            &mut self.backends.reflector,
            &mut self.backends.optimizer,
        ] {
            if let Some(script) = backend.script_path.as_mut() {
                resolve(script);
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if self.max_iters == 0 {
            return Err("max_iters must be positive".into());
        }
        if self.patience == 0 {
            return Err("patience must be positive".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be positive".into());
        }
        if self.seeds.is_empty() {
            return Err("seeds must be non-empty".into());
        }
        let (a, b, c) = self.split_ratio;
        if a == 0 || b == 0 || c == 0 {
            return Err("split_ratio parts must be positive".into());
        }
        for (role, backend) in [
            ("executor", &self.backends.executor),
            ("reflector", &self.backends.reflector),
            ("optimizer", &self.backends.optimizer),
        ] {
            backend
                .validate()
                .map_err(|e| format!("{role} backend: {e}"))?;
        }
        Ok(())
    }

    pub fn executor_config(&self) -> ExecutorConfig {
        ExecutorConfig {
            mode: self.mode,
            max_steps: self.max_steps,
            parse_retries: self.parse_retries,
            template_id: self.templates.executor.clone(),
            history_char_budget: self.history_char_budget,
            workers: self.workers,
        }
    }

    pub fn reflector_config(&self) -> ReflectorConfig {
        ReflectorConfig {
            mode: self.reflector,
            template_id: self.templates.reflector.clone(),
            max_reflection_chars: self.max_reflection_chars,
        }
    }

    pub fn rpo_config(&self) -> RpoConfig {
        RpoConfig {
            method: self.rpo,
            max_principle_chars: self.max_principle_chars,
            opt_template_id: self.templates.optimizer.clone(),
            summarize_template_id: Some(self.templates.summarizer.clone()),
            concat_template_id: Some(self.templates.concat.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendKind;

    const MINIMAL: &str = r#"
suite = "suites/academia.json"
mode = "pract"
reflector = "self"
rpo = "batch"
batch_size = 2
max_iters = 3
output_dir = "runs/demo"

[backends.executor]
kind = "scripted"
script_path = "scripts/executor.json"

[backends.reflector]
kind = "scripted"
script_path = "scripts/reflector.json"

[backends.optimizer]
kind = "scripted"
script_path = "scripts/optimizer.json"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.mode, AgentMode::Pract);
        assert_eq!(cfg.split_ratio, (3, 1, 1));
        assert_eq!(cfg.patience, 3);
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.backends.executor.kind, BackendKind::Scripted);
        // Paths resolved against the config dir.
        assert!(cfg.suite.starts_with(dir.path()));
        assert!(cfg.output_dir.starts_with(dir.path()));
        assert!(cfg
            .backends
            .executor
            .script_path
            .as_ref()
            .unwrap()
            .starts_with(dir.path()));
    }

    #[test]
    fn rejects_zero_batch_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, MINIMAL.replace("batch_size = 2", "batch_size = 0")).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn split_ratio_parses_from_array() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        // Top-level keys must precede the [backends.*] tables.
        std::fs::write(
            &path,
            format!("split_ratio = [4, 2, 1]\nseeds = [1, 2]\n{MINIMAL}"),
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.split_ratio, (4, 2, 1));
        assert_eq!(cfg.seeds, vec![1, 2]);
    }
}

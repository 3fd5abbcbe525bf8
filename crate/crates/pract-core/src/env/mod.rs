//! Simulated task environments with deterministic observations and rewards.
//!
//! Two families are provided: function-call tool environments scored by
//! recall of ground-truth actions, and a miniature shopping site scored by
//! attribute coverage of the purchased item.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ActionCall, ActionSpec, Observation};

pub mod gen;
pub mod shop;
pub mod tool;

pub use shop::{shop_reward, ShopGoal, ShopItem, ShopSuite};
pub use tool::{tool_reward, KnowledgeBase, ToolDomain, ToolSuite, ToolTask};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown task query: {0}")]
    UnknownQuery(String),
    #[error("failed to read suite {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid suite {path}: {message}")]
    InvalidSuite { path: String, message: String },
}

/// A single-episode environment. Instances are created per query, stepped
/// sequentially and never shared.
pub trait Environment: Send {
    /// Executes a non-inner action and returns the observation. All
    /// failures are observations, never errors.
    fn step(&mut self, call: &ActionCall) -> Observation;

    /// True once the environment itself has ended the episode.
    fn is_terminal(&self) -> bool;

    /// The reward for the episode as executed so far; called once when the
    /// episode ends for any cause.
    fn final_reward(&self) -> Option<f64>;
}

/// Creates fresh environments for task queries; shared read-only across
/// concurrent episodes.
pub trait EnvFactory: Sync {
    fn action_space(&self) -> &[ActionSpec];
    fn make_env(&self, query: &str) -> Result<Box<dyn Environment>, EnvError>;
}

/// A loadable task suite: tasks plus the data and action space they run
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSuite {
    Tool(ToolSuite),
    Shop(ShopSuite),
}

impl TaskSuite {
    pub fn queries(&self) -> Vec<String> {
        match self {
            TaskSuite::Tool(s) => s.tasks.iter().map(|t| t.query.clone()).collect(),
            TaskSuite::Shop(s) => s.tasks.iter().map(|t| t.query_hint.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TaskSuite::Tool(s) => s.tasks.len(),
            TaskSuite::Shop(s) => s.tasks.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn env_id(&self) -> String {
        match self {
            TaskSuite::Tool(s) => s.domain.to_string(),
            TaskSuite::Shop(_) => "shop".to_string(),
        }
    }

    /// True when every episode in this suite ends with a reward.
    pub fn emits_rewards(&self) -> bool {
        true
    }

    fn validate(&self, path: &str) -> Result<(), EnvError> {
        let invalid = |message: String| EnvError::InvalidSuite {
            path: path.to_string(),
            message,
        };
        match self {
            TaskSuite::Tool(s) => s.validate().map_err(invalid),
            TaskSuite::Shop(s) => s.validate().map_err(invalid),
        }
    }
}

impl EnvFactory for TaskSuite {
    fn action_space(&self) -> &[ActionSpec] {
        match self {
            TaskSuite::Tool(s) => &s.actions,
            TaskSuite::Shop(s) => &s.actions,
        }
    }

    fn make_env(&self, query: &str) -> Result<Box<dyn Environment>, EnvError> {
        match self {
            TaskSuite::Tool(s) => s.make_env(query),
            TaskSuite::Shop(s) => s.make_env(query),
        }
    }
}

/// Loads and validates a task suite file. Schema violations are reported
/// with their line and column.
pub fn load_task_suite(path: &Path) -> Result<TaskSuite, EnvError> {
    let text = fs::read_to_string(path).map_err(|source| EnvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let suite: TaskSuite =
        serde_json::from_str(&text).map_err(|e| EnvError::InvalidSuite {
            path: path.display().to_string(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
    suite.validate(&path.display().to_string())?;
    Ok(suite)
}

/// Writes a suite in its stable on-disk form.
pub fn save_task_suite(path: &Path, suite: &TaskSuite) -> Result<(), EnvError> {
    let mut text =
        serde_json::to_string_pretty(suite).expect("suite serialization cannot fail");
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| EnvError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    fs::write(path, text).map_err(|source| EnvError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Checks that every ground-truth call names an action in the space with
/// arguments the schema accepts.
pub(crate) fn check_calls_in_space(
    calls: &[ActionCall],
    space: &[ActionSpec],
    context: &str,
) -> Result<(), String> {
    for call in calls {
        let Some(spec) = space.iter().find(|s| s.name == call.action) else {
            return Err(format!("{context}: ground-truth action {} not in space", call.action));
        };
        for name in call.args.keys() {
            if !spec.params.iter().any(|p| &p.name == name) {
                return Err(format!(
                    "{context}: ground-truth call {} has unknown param {name}",
                    call.action
                ));
            }
        }
    }
    Ok(())
}

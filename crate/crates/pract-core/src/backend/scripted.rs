//! Deterministic scripted backend.
//!
//! A script is an ordered list of rules. Each `complete` call renders the
//! messages to `role: content` lines, scans the rules in order and returns
//! the response of the first matching, non-exhausted rule. Identical
//! (script, call sequence) pairs produce identical output sequences on any
//! platform.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ChatMessage};
use crate::template::flatten_messages;

/// How a rule matches the rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// Plain substring search.
    Substring(String),
    /// Regular expression search.
    Regex(String),
}

/// One scripted response. Rules are ordered; the first match wins; a rule
/// exhausted by `max_uses` is skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: MatchRule,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_uses: Option<u64>,
}

impl ScriptRule {
    pub fn substring(pattern: &str, response: &str) -> Self {
        Self {
            matcher: MatchRule::Substring(pattern.to_string()),
            response: response.to_string(),
            max_uses: None,
        }
    }

    pub fn regex(pattern: &str, response: &str) -> Self {
        Self {
            matcher: MatchRule::Regex(pattern.to_string()),
            response: response.to_string(),
            max_uses: None,
        }
    }

    pub fn once(mut self) -> Self {
        self.max_uses = Some(1);
        self
    }

    pub fn uses(mut self, n: u64) -> Self {
        self.max_uses = Some(n);
        self
    }
}

/// Reads an ordered rule list from a JSON script file.
pub fn load_script(path: &Path) -> Result<Vec<ScriptRule>, BackendError> {
    let text = fs::read_to_string(path).map_err(|source| BackendError::ScriptIo {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| BackendError::InvalidScript {
        index: 0,
        message: format!("{}: {e}", path.display()),
    })
}

enum Matcher {
    Substring(String),
    Regex(regex::Regex),
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Substring(s) => prompt.contains(s),
            Matcher::Regex(re) => re.is_match(prompt),
        }
    }
}

pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    matchers: Vec<Matcher>,
    uses: Mutex<Vec<u64>>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, BackendError> {
        let mut matchers = Vec::with_capacity(rules.len());
        for (index, rule) in rules.iter().enumerate() {
            let m = match &rule.matcher {
                MatchRule::Substring(s) => Matcher::Substring(s.clone()),
                MatchRule::Regex(pattern) => Matcher::Regex(regex::Regex::new(pattern).map_err(
                    |e| BackendError::InvalidScript {
                        index,
                        message: e.to_string(),
                    },
                )?),
            };
            matchers.push(m);
        }
        let uses = Mutex::new(vec![0; rules.len()]);
        Ok(Self {
            rules,
            matchers,
            uses,
            calls: AtomicU64::new(0),
        })
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if messages.is_empty() {
            return Err(BackendError::EmptyMessages);
        }
        let prompt = flatten_messages(messages);
        // Matching and use-count update happen under one lock so the
        // counters stay exact under concurrent callers.
        let mut uses = self.uses.lock().expect("script use counters poisoned");
        for (i, matcher) in self.matchers.iter().enumerate() {
            if let Some(max) = self.rules[i].max_uses {
                if uses[i] >= max {
                    continue;
                }
            }
            if matcher.matches(&prompt) {
                uses[i] += 1;
                return Ok(self.rules[i].response.clone());
            }
        }
        Err(BackendError::NoScriptMatch { prompt })
    }

    fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

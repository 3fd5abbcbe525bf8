//! Prompt templates with named `{placeholder}` substitution.
//!
//! Templates are plain text files keyed by id. The shipped defaults live in
//! `templates/` and are embedded in the binary; a template directory can
//! override or extend them. A template may contain a `=== user ===` marker
//! line splitting it into a system part and a user part; without the marker
//! the whole rendering becomes a single user message.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::backend::ChatMessage;

/// Marker line separating the system section from the user section.
pub const USER_SECTION_MARKER: &str = "=== user ===";

pub const EXECUTOR_TEMPLATE_ID: &str = "executor_default";
pub const REFLECTOR_TEMPLATE_ID: &str = "reflector_default";
pub const OPTIMIZER_TEMPLATE_ID: &str = "optimizer_default";
pub const SUMMARIZER_TEMPLATE_ID: &str = "summarizer_default";
pub const CONCAT_TEMPLATE_ID: &str = "concat_default";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template id: {0}")]
    UnknownTemplate(String),
    #[error("failed to read template dir {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// In-memory set of templates keyed by id.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    templates: HashMap<String, String>,
}

impl TemplateStore {
    /// Store holding only the shipped defaults.
    pub fn builtin() -> Self {
        let mut templates = HashMap::new();
        templates.insert(
            EXECUTOR_TEMPLATE_ID.to_string(),
            include_str!("../templates/executor_default.txt").to_string(),
        );
        templates.insert(
            REFLECTOR_TEMPLATE_ID.to_string(),
            include_str!("../templates/reflector_default.txt").to_string(),
        );
        templates.insert(
            OPTIMIZER_TEMPLATE_ID.to_string(),
            include_str!("../templates/optimizer_default.txt").to_string(),
        );
        templates.insert(
            SUMMARIZER_TEMPLATE_ID.to_string(),
            include_str!("../templates/summarizer_default.txt").to_string(),
        );
        templates.insert(
            CONCAT_TEMPLATE_ID.to_string(),
            include_str!("../templates/concat_default.txt").to_string(),
        );
        Self { templates }
    }

    /// Loads every `<id>.txt` file from `dir` on top of the builtins.
    pub fn builtin_with_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut store = Self::builtin();
        let entries = fs::read_dir(dir).map_err(|source| TemplateError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| TemplateError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            store.templates.insert(id.to_string(), text);
        }
        Ok(store)
    }

    pub fn insert(&mut self, id: &str, text: &str) {
        self.templates.insert(id.to_string(), text.to_string());
    }

    pub fn get(&self, id: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
    }

    /// Renders the template with the given placeholder values and splits it
    /// into chat messages at the user-section marker.
    pub fn render_messages(
        &self,
        id: &str,
        values: &[(&str, &str)],
    ) -> Result<Vec<ChatMessage>, TemplateError> {
        let rendered = render(self.get(id)?, values);
        Ok(split_messages(&rendered))
    }

    /// Renders the template to flat text (no message splitting).
    pub fn render_text(&self, id: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        Ok(render(self.get(id)?, values))
    }
}

/// Replaces each `{name}` placeholder with its value. Placeholders without
/// a supplied value are left untouched.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

fn split_messages(rendered: &str) -> Vec<ChatMessage> {
    match rendered.split_once(USER_SECTION_MARKER) {
        Some((system, user)) => vec![
            ChatMessage::system(system.trim()),
            ChatMessage::user(user.trim()),
        ],
        None => vec![ChatMessage::user(rendered.trim())],
    }
}

/// Flattens messages to the text that scripted rules match against and
/// tests assert on: one `role: content` block per message.
pub fn flatten_messages(messages: &[crate::backend::ChatMessage]) -> String {
    messages
        .iter()
        .map(|m| format!("{}: {}", m.role, m.content))
        .collect::<Vec<_>>()
        .join("\n")
}

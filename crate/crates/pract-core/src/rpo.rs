//! Reflective principle optimization: turns a batch of reflections into a
//! new principle version.
//!
//! Two methods are provided. The per-trajectory method prompts the
//! optimizer once per reflection and merges the resulting candidate sets
//! with one summarizer call (|Q|+1 backend calls for |Q| usable
//! reflections). The batch method concatenates every reflection into a
//! single optimizer prompt (always exactly 1 backend call, with a
//! correspondingly longer context).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::template::{
    TemplateStore, CONCAT_TEMPLATE_ID, OPTIMIZER_TEMPLATE_ID, SUMMARIZER_TEMPLATE_ID,
};
use crate::types::{
    ActionSpec, Principle, PrincipleSet, Provenance, Reflection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpoMethod {
    Traj,
    Batch,
}

impl std::fmt::Display for RpoMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RpoMethod::Traj => f.write_str("traj"),
            RpoMethod::Batch => f.write_str("batch"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpoConfig {
    pub method: RpoMethod,
    pub max_principle_chars: usize,
    pub opt_template_id: String,
    pub summarize_template_id: Option<String>,
    pub concat_template_id: Option<String>,
}

impl RpoConfig {
    pub fn new(method: RpoMethod) -> Self {
        Self {
            method,
            max_principle_chars: 1500,
            opt_template_id: OPTIMIZER_TEMPLATE_ID.to_string(),
            summarize_template_id: Some(SUMMARIZER_TEMPLATE_ID.to_string()),
            concat_template_id: Some(CONCAT_TEMPLATE_ID.to_string()),
        }
    }

    pub fn validate(&self) -> Result<(), RpoError> {
        match self.method {
            RpoMethod::Traj if self.summarize_template_id.is_none() => Err(
                RpoError::InvalidConfig("traj method requires summarize_template_id".into()),
            ),
            RpoMethod::Batch if self.concat_template_id.is_none() => Err(RpoError::InvalidConfig(
                "batch method requires concat_template_id".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum RpoError {
    #[error("invalid rpo config: {0}")]
    InvalidConfig(String),
    #[error("reflection for query {0:?} is degenerate and cannot drive optimization")]
    DegenerateReflection(String),
    #[error("no non-degenerate reflections in the batch")]
    NoUsableReflections,
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Per-task optimizer output: possibly-partial entries plus fallback
/// status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePrincipleSet {
    pub entries: std::collections::BTreeMap<String, String>,
    pub source_query: String,
    pub no_update: bool,
}

/// Outcome of one optimization call: the new version plus whether every
/// optimizer output fell back to the current entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RpoOutcome {
    pub principles: PrincipleSet,
    pub no_update: bool,
    pub warnings: Vec<String>,
}

/// Result of [`parse_principles`]: the recognized entries and a warning
/// per ignored line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPrinciples {
    pub entries: std::collections::BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

/// Parses optimizer output in the line grammar `action_name: text`, with
/// multi-line continuation by indentation. Unknown action names are
/// ignored with a warning; each text is truncated to `max_chars` at a
/// whitespace boundary.
pub fn parse_principles(raw: &str, space: &[ActionSpec], max_chars: usize) -> ParsedPrinciples {
    let mut parsed = ParsedPrinciples::default();
    let mut current: Option<(String, String, bool)> = None; // (action, text, known)

    let flush = |current: &mut Option<(String, String, bool)>,
                 parsed: &mut ParsedPrinciples| {
        if let Some((action, text, known)) = current.take() {
            let text = truncate_at_whitespace(text.trim(), max_chars);
            if known && !text.is_empty() {
                parsed.entries.insert(action, text);
            }
        }
    };

    for line in raw.lines() {
        if line.starts_with(' ') || line.starts_with('\t') {
            if let Some((_, text, _)) = current.as_mut() {
                if !line.trim().is_empty() {
                    text.push(' ');
                    text.push_str(line.trim());
                }
            }
            continue;
        }
        let Some((head, rest)) = line.split_once(':') else {
            flush(&mut current, &mut parsed);
            continue;
        };
        let name = head.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            flush(&mut current, &mut parsed);
            continue;
        }
        flush(&mut current, &mut parsed);
        let known = space.iter().any(|s| s.name == name);
        if !known {
            parsed
                .warnings
                .push(format!("ignored principle for unknown action {name}"));
        }
        current = Some((name.to_string(), rest.trim().to_string(), known));
    }
    flush(&mut current, &mut parsed);
    parsed
}

fn truncate_at_whitespace(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let prefix: String = text.chars().take(max_chars).collect();
    match prefix.rfind(char::is_whitespace) {
        Some(pos) if pos > 0 => prefix[..pos].trim_end().to_string(),
        _ => prefix,
    }
}

fn principles_block(principles: &PrincipleSet) -> String {
    principles
        .entries
        .values()
        .map(|p| format!("- {}: {}", p.action, p.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn actions_block(space: &[ActionSpec]) -> String {
    space
        .iter()
        .map(|s| format!("- {}: {}", s.name, s.description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs the optimizer once over a single reflection. Unparsed actions keep
/// their current principle text; wholly unparseable output yields a
/// candidate equal to the current principles, flagged `no_update`.
pub fn optimize_one(
    cfg: &RpoConfig,
    reflection: &Reflection,
    principles: &PrincipleSet,
    backend: &dyn Backend,
    templates: &TemplateStore,
    space: &[ActionSpec],
) -> Result<CandidatePrincipleSet, RpoError> {
    if reflection.degenerate {
        return Err(RpoError::DegenerateReflection(reflection.query.clone()));
    }
    let messages = templates.render_messages(
        &cfg.opt_template_id,
        &[
            ("reflection", &reflection.text),
            ("principles", &principles_block(principles)),
            ("actions", &actions_block(space)),
        ],
    )?;
    let raw = backend.complete(&messages)?;
    let parsed = parse_principles(&raw, space, cfg.max_principle_chars);
    if parsed.entries.is_empty() {
        let entries = principles
            .entries
            .iter()
            .map(|(k, p)| (k.clone(), p.text.clone()))
            .collect();
        return Ok(CandidatePrincipleSet {
            entries,
            source_query: reflection.query.clone(),
            no_update: true,
        });
    }
    Ok(CandidatePrincipleSet {
        entries: parsed.entries,
        source_query: reflection.query.clone(),
        no_update: false,
    })
}

fn usable<'a>(reflections: &'a [Reflection]) -> Vec<&'a Reflection> {
    reflections.iter().filter(|r| !r.degenerate).collect()
}

/// Completes partial entries with the current principle texts and bumps
/// the version.
fn complete_and_bump(
    current: &PrincipleSet,
    updates: std::collections::BTreeMap<String, String>,
    provenance: Provenance,
    space: &[ActionSpec],
) -> PrincipleSet {
    let entries = space
        .iter()
        .map(|spec| {
            let text = updates
                .get(&spec.name)
                .cloned()
                .or_else(|| current.text_for(&spec.name).map(str::to_string))
                .unwrap_or_else(|| spec.description.clone());
            (
                spec.name.clone(),
                Principle {
                    action: spec.name.clone(),
                    text,
                },
            )
        })
        .collect();
    current.child(entries, provenance)
}

/// Per-trajectory optimization: one optimizer call per usable reflection,
/// then one summarizer call merging the candidates. Exactly |Q|+1 backend
/// calls.
pub fn rpo_traj(
    cfg: &RpoConfig,
    reflections: &[Reflection],
    principles: &PrincipleSet,
    backend: &dyn Backend,
    templates: &TemplateStore,
    space: &[ActionSpec],
) -> Result<RpoOutcome, RpoError> {
    cfg.validate()?;
    let usable = usable(reflections);
    if usable.is_empty() {
        return Err(RpoError::NoUsableReflections);
    }

    let mut warnings = Vec::new();
    let mut candidates = Vec::with_capacity(usable.len());
    for reflection in &usable {
        let candidate = optimize_one(cfg, reflection, principles, backend, templates, space)?;
        if candidate.no_update {
            warnings.push(format!(
                "optimizer output unparseable for query {:?}; candidate kept current principles",
                candidate.source_query
            ));
        }
        candidates.push(candidate);
    }

    let candidates_block = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let entries = c
                .entries
                .iter()
                .map(|(action, text)| format!("{action}: {text}"))
                .collect::<Vec<_>>()
                .join("\n");
            format!("Candidate set {} (task {:?}):\n{entries}", i + 1, c.source_query)
        })
        .collect::<Vec<_>>()
        .join("\n\n");

    let summarize_id = cfg.summarize_template_id.as_deref().expect("validated");
    let messages = templates.render_messages(
        summarize_id,
        &[
            ("candidates", candidates_block.as_str()),
            ("principles", &principles_block(principles)),
            ("actions", &actions_block(space)),
        ],
    )?;
    let raw = backend.complete(&messages)?;
    let parsed = parse_principles(&raw, space, cfg.max_principle_chars);
    warnings.extend(parsed.warnings);

    if parsed.entries.is_empty() {
        warnings.push("summarizer output unparseable; keeping current principles".to_string());
        return Ok(RpoOutcome {
            principles: complete_and_bump(
                principles,
                Default::default(),
                Provenance::Manual,
                space,
            ),
            no_update: true,
            warnings,
        });
    }
    Ok(RpoOutcome {
        principles: complete_and_bump(principles, parsed.entries, Provenance::RpoTraj, space),
        no_update: false,
        warnings,
    })
}

/// Batch optimization: every usable reflection is concatenated through the
/// concat template into one optimizer prompt. Exactly 1 backend call.
pub fn rpo_batch(
    cfg: &RpoConfig,
    reflections: &[Reflection],
    principles: &PrincipleSet,
    backend: &dyn Backend,
    templates: &TemplateStore,
    space: &[ActionSpec],
) -> Result<RpoOutcome, RpoError> {
    cfg.validate()?;
    let usable = usable(reflections);
    if usable.is_empty() {
        return Err(RpoError::NoUsableReflections);
    }

    let concat_id = cfg.concat_template_id.as_deref().expect("validated");
    let concatenated = usable
        .iter()
        .map(|r| {
            templates.render_text(
                concat_id,
                &[("query", r.query.as_str()), ("reflection", r.text.as_str())],
            )
        })
        .collect::<Result<Vec<_>, _>>()?
        .join("\n");

    let messages = templates.render_messages(
        &cfg.opt_template_id,
        &[
            ("reflection", concatenated.as_str()),
            ("principles", &principles_block(principles)),
            ("actions", &actions_block(space)),
        ],
    )?;
    let raw = backend.complete(&messages)?;
    let parsed = parse_principles(&raw, space, cfg.max_principle_chars);
    let mut warnings = parsed.warnings;

    if parsed.entries.is_empty() {
        warnings.push("optimizer output unparseable; keeping current principles".to_string());
        return Ok(RpoOutcome {
            principles: complete_and_bump(
                principles,
                Default::default(),
                Provenance::Manual,
                space,
            ),
            no_update: true,
            warnings,
        });
    }
    Ok(RpoOutcome {
        principles: complete_and_bump(principles, parsed.entries, Provenance::RpoBatch, space),
        no_update: false,
        warnings,
    })
}

/// Dispatches on the configured method.
pub fn optimize(
    cfg: &RpoConfig,
    reflections: &[Reflection],
    principles: &PrincipleSet,
    backend: &dyn Backend,
    templates: &TemplateStore,
    space: &[ActionSpec],
) -> Result<RpoOutcome, RpoError> {
    match cfg.method {
        RpoMethod::Traj => rpo_traj(cfg, reflections, principles, backend, templates, space),
        RpoMethod::Batch => rpo_batch(cfg, reflections, principles, backend, templates, space),
    }
}

//! The reflector agent: critiques a completed trajectory against the
//! current principles, either freely (self mode) or aligned with the
//! episode reward (reward mode).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, ChatMessage};
use crate::template::{TemplateStore, REFLECTOR_TEMPLATE_ID};
use crate::types::{ActionSpec, PrincipleSet, Reflection, ReflectorMode, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectorConfig {
    pub mode: ReflectorMode,
    pub template_id: String,
    pub max_reflection_chars: usize,
}

impl ReflectorConfig {
    pub fn new(mode: ReflectorMode) -> Self {
        Self {
            mode,
            template_id: REFLECTOR_TEMPLATE_ID.to_string(),
            max_reflection_chars: 4000,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("reward-mode reflection requires a trajectory reward (query: {query})")]
    MissingReward { query: String },
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Trajectory block shared by the reflection and report renderings.
pub fn render_trajectory_block(t: &Trajectory, space: &[ActionSpec]) -> String {
    let mut lines: Vec<String> = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let spec = space.iter().find(|s| s.name == step.action.action);
            format!(
                "{}. {}\n   -> {}",
                i + 1,
                step.action.canonical(spec),
                step.observation.text
            )
        })
        .collect();
    lines.push(format!("episode ended: {}", t.terminated));
    lines.join("\n")
}

/// Renders the reflection prompt: the full trajectory, all principle
/// texts, and — in reward mode only — the reward to 4 decimal places.
pub fn render_reflection_prompt(
    cfg: &ReflectorConfig,
    templates: &TemplateStore,
    t: &Trajectory,
    principles: &PrincipleSet,
    space: &[ActionSpec],
) -> Result<Vec<ChatMessage>, ReflectError> {
    let reward_line = match cfg.mode {
        ReflectorMode::Reward => {
            let reward = t.reward.ok_or_else(|| ReflectError::MissingReward {
                query: t.query.clone(),
            })?;
            format!("Final reward: {reward:.4}\n")
        }
        ReflectorMode::SelfReflect => String::new(),
    };
    let principle_lines = principles
        .entries
        .values()
        .map(|p| format!("- {}: {}", p.action, p.text))
        .collect::<Vec<_>>()
        .join("\n");
    let trajectory = render_trajectory_block(t, space);
    Ok(templates.render_messages(
        &cfg.template_id,
        &[
            ("query", &t.query),
            ("trajectory", &trajectory),
            ("principles", &principle_lines),
            ("reward?", &reward_line),
        ],
    )?)
}

fn truncate_at_char_boundary(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    text.chars().take(max_chars).collect()
}

/// Produces the critique for one trajectory.
pub fn reflect(
    cfg: &ReflectorConfig,
    t: &Trajectory,
    principles: &PrincipleSet,
    backend: &dyn Backend,
    templates: &TemplateStore,
    space: &[ActionSpec],
) -> Result<Reflection, ReflectError> {
    let messages = render_reflection_prompt(cfg, templates, t, principles, space)?;
    let raw = backend.complete(&messages)?;
    let text = truncate_at_char_boundary(&raw, cfg.max_reflection_chars);
    let degenerate = text.trim().is_empty();
    Ok(Reflection {
        query: t.query.clone(),
        trajectory_id: t.id(),
        text,
        mode: cfg.mode,
        reward: match cfg.mode {
            ReflectorMode::Reward => t.reward,
            ReflectorMode::SelfReflect => None,
        },
        degenerate,
    })
}

/// Reflects on every trajectory, order-aligned; one backend call per
/// reflected trajectory. Per-trajectory failures are recorded and never
/// abort the batch.
pub fn reflect_all(
    cfg: &ReflectorConfig,
    trajectories: &[Trajectory],
    principles: &PrincipleSet,
    backend: &dyn Backend,
    templates: &TemplateStore,
    space: &[ActionSpec],
) -> Vec<Result<Reflection, ReflectError>> {
    trajectories
        .iter()
        .map(|t| reflect(cfg, t, principles, backend, templates, space))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptRule, ScriptedBackend};
    use crate::template::flatten_messages;
    use crate::types::{ActionCall, Observation, Step, TerminationCause};

    fn space() -> Vec<ActionSpec> {
        vec![
            ActionSpec::new(
                "search",
                "Search.",
                vec![crate::types::ParamSpec::string("query")],
            ),
            ActionSpec::think(),
            ActionSpec::finish(),
        ]
    }

    fn trajectory(reward: Option<f64>) -> Trajectory {
        Trajectory {
            query: "find a venue".into(),
            steps: vec![
                Step {
                    action: ActionCall::new("think", &[("thought", "look it up")]),
                    observation: Observation::null(),
                },
                Step {
                    action: ActionCall::new("search", &[("query", "venue name")]),
                    observation: Observation::text("found: Annual Systems Symposium"),
                },
            ],
            reward,
            terminated: TerminationCause::Finished,
        }
    }

    fn principles() -> PrincipleSet {
        PrincipleSet::seed_from_space(&space())
    }

    #[test]
    fn reward_prompt_contains_four_decimal_reward() {
        let cfg = ReflectorConfig::new(ReflectorMode::Reward);
        let msgs = render_reflection_prompt(
            &cfg,
            &TemplateStore::builtin(),
            &trajectory(Some(0.5)),
            &principles(),
            &space(),
        )
        .unwrap();
        let text = flatten_messages(&msgs);
        assert!(text.contains("0.5000"));
    }

    #[test]
    fn self_prompt_contains_no_reward_token() {
        let cfg = ReflectorConfig::new(ReflectorMode::SelfReflect);
        let msgs = render_reflection_prompt(
            &cfg,
            &TemplateStore::builtin(),
            &trajectory(Some(0.5)),
            &principles(),
            &space(),
        )
        .unwrap();
        let text = flatten_messages(&msgs);
        assert!(!text.contains("Final reward"));
        assert!(!text.contains("0.5000"));
    }

    #[test]
    fn prompt_contains_every_step_and_principle() {
        let cfg = ReflectorConfig::new(ReflectorMode::Reward);
        let t = trajectory(Some(1.0));
        let p = principles();
        let msgs =
            render_reflection_prompt(&cfg, &TemplateStore::builtin(), &t, &p, &space()).unwrap();
        let text = flatten_messages(&msgs);
        assert!(text.contains("think[look it up]"));
        assert!(text.contains("search[venue name]"));
        assert!(text.contains("found: Annual Systems Symposium"));
        for principle in p.entries.values() {
            assert!(text.contains(&principle.text));
        }
        assert!(text.contains(&t.query));
    }

    #[test]
    fn reward_mode_without_reward_is_missing_reward() {
        let cfg = ReflectorConfig::new(ReflectorMode::Reward);
        let backend = ScriptedBackend::new(vec![ScriptRule::substring("Task", "bad")]).unwrap();
        let err = reflect(
            &cfg,
            &trajectory(None),
            &principles(),
            &backend,
            &TemplateStore::builtin(),
            &space(),
        )
        .unwrap_err();
        assert!(matches!(err, ReflectError::MissingReward { .. }));
        assert_eq!(backend.call_count(), 0);
    }

    #[test]
    fn modes_stay_pure() {
        let backend =
            ScriptedBackend::new(vec![ScriptRule::substring("Task", "a critique")]).unwrap();
        let cfg = ReflectorConfig::new(ReflectorMode::Reward);
        let r = reflect(
            &cfg,
            &trajectory(Some(0.25)),
            &principles(),
            &backend,
            &TemplateStore::builtin(),
            &space(),
        )
        .unwrap();
        assert_eq!(r.mode, ReflectorMode::Reward);
        assert_eq!(r.reward, Some(0.25));

        let cfg = ReflectorConfig::new(ReflectorMode::SelfReflect);
        let r = reflect(
            &cfg,
            &trajectory(Some(0.25)),
            &principles(),
            &backend,
            &TemplateStore::builtin(),
            &space(),
        )
        .unwrap();
        assert_eq!(r.mode, ReflectorMode::SelfReflect);
        assert_eq!(r.reward, None);
        assert!(!r.degenerate);
    }

    #[test]
    fn reflect_all_makes_one_call_each() {
        let backend =
            ScriptedBackend::new(vec![ScriptRule::substring("Task", "critique text")]).unwrap();
        let cfg = ReflectorConfig::new(ReflectorMode::Reward);
        let ts = vec![trajectory(Some(0.1)); 4];
        let rs = reflect_all(
            &cfg,
            &ts,
            &principles(),
            &backend,
            &TemplateStore::builtin(),
            &space(),
        );
        assert_eq!(rs.len(), 4);
        assert!(rs.iter().all(|r| r.is_ok()));
        assert_eq!(backend.call_count(), 4);
    }

    #[test]
    fn empty_critique_is_flagged_degenerate() {
        let backend = ScriptedBackend::new(vec![ScriptRule::substring("Task", "   ")]).unwrap();
        let cfg = ReflectorConfig::new(ReflectorMode::SelfReflect);
        let r = reflect(
            &cfg,
            &trajectory(None),
            &principles(),
            &backend,
            &TemplateStore::builtin(),
            &space(),
        )
        .unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn mixed_batch_isolates_rewardless_failures() {
        let backend =
            ScriptedBackend::new(vec![ScriptRule::substring("Task", "critique")]).unwrap();
        let cfg = ReflectorConfig::new(ReflectorMode::Reward);
        let ts = vec![trajectory(Some(0.5)), trajectory(None), trajectory(Some(1.0))];
        let rs = reflect_all(
            &cfg,
            &ts,
            &principles(),
            &backend,
            &TemplateStore::builtin(),
            &space(),
        );
        assert!(rs[0].is_ok());
        assert!(matches!(rs[1], Err(ReflectError::MissingReward { .. })));
        assert!(rs[2].is_ok());
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn long_critiques_truncate() {
        let long = "x".repeat(100);
        let backend = ScriptedBackend::new(vec![ScriptRule::substring("Task", &long)]).unwrap();
        let mut cfg = ReflectorConfig::new(ReflectorMode::SelfReflect);
        cfg.max_reflection_chars = 10;
        let r = reflect(
            &cfg,
            &trajectory(None),
            &principles(),
            &backend,
            &TemplateStore::builtin(),
            &space(),
        )
        .unwrap();
        assert_eq!(r.text.len(), 10);
    }
}

//! The executor agent: renders the principle-conditioned prompt, queries a
//! backend for the next action, steps the environment and accumulates the
//! trajectory.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, ChatMessage};
use crate::env::{EnvFactory, Environment};
use crate::template::{TemplateStore, EXECUTOR_TEMPLATE_ID};
use crate::types::{
    validate_principle_set, ActionSpec, Observation, ParamType, PrincipleSet, Step,
    TerminationCause, Trajectory, FINISH_ACTION,
};

mod parse;

pub use parse::{parse_action, ParseActionError};

/// How much structure the agent prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    /// Environment actions only; no think action, no principles.
    Act,
    /// Think action available; no principles.
    React,
    /// Think action available; principles included in the prompt.
    Pract,
}

impl std::fmt::Display for AgentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AgentMode::Act => "act",
            AgentMode::React => "react",
            AgentMode::Pract => "pract",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub mode: AgentMode,
    pub max_steps: usize,
    pub parse_retries: usize,
    pub template_id: String,
    /// Rendered history beyond this many characters elides oldest steps.
    pub history_char_budget: usize,
    /// Episodes per batch that may run concurrently.
    pub workers: usize,
}

impl ExecutorConfig {
    pub fn new(mode: AgentMode) -> Self {
        Self {
            mode,
            max_steps: 10,
            parse_retries: 2,
            template_id: EXECUTOR_TEMPLATE_ID.to_string(),
            history_char_budget: 16_000,
            workers: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("invalid principle set: {0}")]
    InvalidPrincipleSet(String),
    #[error("principles must be present iff mode is pract (mode {mode}, principles {})",
        if *.present { "present" } else { "absent" })]
    PrincipleModeMismatch { mode: AgentMode, present: bool },
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("environment error: {0}")]
    Env(#[from] crate::env::EnvError),
}

/// Actions visible to the agent in a mode: act drops inner actions except
/// `finish`; react and pract see the full space.
pub fn visible_actions(space: &[ActionSpec], mode: AgentMode) -> Vec<&ActionSpec> {
    space
        .iter()
        .filter(|spec| match mode {
            AgentMode::Act => !spec.is_inner || spec.name == FINISH_ACTION,
            AgentMode::React | AgentMode::Pract => true,
        })
        .collect()
}

fn param_schema(spec: &ActionSpec) -> String {
    if spec.params.is_empty() {
        return "no arguments".to_string();
    }
    spec.params
        .iter()
        .map(|p| {
            let ty = match &p.param_type {
                ParamType::String => "string".to_string(),
                ParamType::Integer => "integer".to_string(),
                ParamType::Enum { values } => format!("one of {}", values.join("|")),
            };
            let req = if p.required { "" } else { ", optional" };
            format!("{}: {ty}{req}", p.name)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Action list block: name, parameter schema and description, one action
/// per line.
pub fn render_actions_block(actions: &[&ActionSpec]) -> String {
    actions
        .iter()
        .map(|spec| format!("- {} ({}) — {}", spec.name, param_schema(spec), spec.description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Principles block shown in pract mode.
pub fn render_principles_block(principles: &PrincipleSet, actions: &[&ActionSpec]) -> String {
    let mut lines = vec!["Action principles:".to_string()];
    for spec in actions {
        if let Some(text) = principles.text_for(&spec.name) {
            lines.push(format!("- {}: {}", spec.name, text));
        }
    }
    lines.join("\n")
}

/// History block; steps render in order, oldest elided under the budget.
pub fn render_history(steps: &[Step], space: &[ActionSpec], budget: usize) -> String {
    let lines: Vec<String> = steps
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
    let mut start = 0;
    let total = |from: usize| -> usize { lines[from..].iter().map(|l| l.len() + 1).sum() };
    while start < lines.len().saturating_sub(1) && total(start) > budget {
        start += 1;
    }
    let mut out = Vec::new();
    if start > 0 {
        out.push(format!("[{start} earlier step(s) elided]"));
    }
    out.extend_from_slice(&lines[start..]);
    out.join("\n")
}

/// Renders the executor prompt. The output contains the query, every
/// visible action with its schema and description, every principle text in
/// pract mode, the step history in order, and a trailing instruction to
/// emit the next action in the canonical grammar.
pub fn render_prompt(
    cfg: &ExecutorConfig,
    templates: &TemplateStore,
    query: &str,
    context: &[Step],
    principles: Option<&PrincipleSet>,
    space: &[ActionSpec],
) -> Result<Vec<ChatMessage>, ExecutorError> {
    match (cfg.mode, principles.is_some()) {
        (AgentMode::Pract, true) | (AgentMode::Act, false) | (AgentMode::React, false) => {}
        (mode, present) => return Err(ExecutorError::PrincipleModeMismatch { mode, present }),
    }
    if let Some(p) = principles {
        let violations = validate_principle_set(p, space);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(ExecutorError::InvalidPrincipleSet(msgs.join("; ")));
        }
    }

    let actions = visible_actions(space, cfg.mode);
    let actions_block = render_actions_block(&actions);
    let principles_block = principles
        .map(|p| render_principles_block(p, &actions))
        .unwrap_or_default();
    let history = render_history(context, space, cfg.history_char_budget);

    Ok(templates.render_messages(
        &cfg.template_id,
        &[
            ("query", query),
            ("actions", &actions_block),
            ("principles", &principles_block),
            ("history", &history),
        ],
    )?)
}

/// Runs one agent episode against a fresh environment.
///
/// Each non-inner action is forwarded to the environment and its
/// observation recorded; inner actions pair with the null observation; the
/// `finish` action and environment-terminal states end the episode. Parse
/// failures re-prompt with a correction message up to `parse_retries`
/// times, then terminate the trajectory as a parse failure.
pub fn run_episode(
    cfg: &ExecutorConfig,
    query: &str,
    env: &mut dyn Environment,
    principles: Option<&PrincipleSet>,
    backend: &dyn Backend,
    templates: &TemplateStore,
    space: &[ActionSpec],
) -> Result<Trajectory, ExecutorError> {
    let mut steps: Vec<Step> = Vec::new();
    let visible: Vec<ActionSpec> = visible_actions(space, cfg.mode)
        .into_iter()
        .cloned()
        .collect();

    let terminated = loop {
        if steps.len() >= cfg.max_steps {
            break TerminationCause::MaxSteps;
        }
        let mut messages = render_prompt(cfg, templates, query, &steps, principles, space)?;

        // One backend call plus up to parse_retries corrective re-prompts
        // for this step.
        let mut call = None;
        for _attempt in 0..=cfg.parse_retries {
            let raw = backend.complete(&messages)?;
            match parse_action(&raw, &visible) {
                Ok(parsed) => {
                    call = Some(parsed);
                    break;
                }
                Err(err) => {
                    messages.push(ChatMessage::assistant(raw));
                    messages.push(ChatMessage::user(format!(
                        "That was not a valid action ({err}). Respond with exactly one action in \
                         the form name[arg1; arg2; ...]."
                    )));
                }
            }
        }
        let Some(call) = call else {
            break TerminationCause::ParseFailure;
        };

        let spec = visible
            .iter()
            .find(|s| s.name == call.action)
            .expect("parse_action validated the name");
        if spec.is_inner {
            let finished = call.action == FINISH_ACTION;
            steps.push(Step {
                action: call,
                observation: Observation::null(),
            });
            if finished {
                break TerminationCause::Finished;
            }
        } else {
            let observation = env.step(&call);
            steps.push(Step { action: call, observation });
            if env.is_terminal() {
                break TerminationCause::Finished;
            }
        }
    };

    Ok(Trajectory {
        query: query.to_string(),
        steps,
        reward: env.final_reward(),
        terminated,
    })
}

/// Runs one episode per query, order-aligned with the input. Episodes get
/// fresh environments and may run on `cfg.workers` threads; per-query
/// failures are recorded in that query's trajectory and never abort the
/// batch.
pub fn run_batch(
    cfg: &ExecutorConfig,
    queries: &[String],
    factory: &dyn EnvFactory,
    principles: Option<&PrincipleSet>,
    backend: &dyn Backend,
    templates: &TemplateStore,
) -> Vec<Trajectory> {
    let space = factory.action_space();
    let run_one = |query: &String| -> Trajectory {
        let result = factory
            .make_env(query)
            .map_err(ExecutorError::from)
            .and_then(|mut env| {
                run_episode(cfg, query, env.as_mut(), principles, backend, templates, space)
            });
        match result {
            Ok(t) => t,
            Err(err) => {
                log::warn!("episode failed for query {query:?}: {err}");
                Trajectory {
                    query: query.clone(),
                    steps: Vec::new(),
                    reward: None,
                    terminated: TerminationCause::ParseFailure,
                }
            }
        }
    };

    let workers = cfg.workers.max(1).min(queries.len().max(1));
    if workers <= 1 {
        return queries.iter().map(run_one).collect();
    }

    let slots: Vec<Mutex<Option<Trajectory>>> =
        queries.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for w in 0..workers {
            let slots = &slots;
            let run_one = &run_one;
            scope.spawn(move || {
                for (i, query) in queries.iter().enumerate() {
                    if i % workers == w {
                        *slots[i].lock().expect("slot poisoned") = Some(run_one(query));
                    }
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot poisoned").expect("slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptRule, ScriptedBackend};
    use crate::env::EnvError;
    use crate::template::flatten_messages;
    use crate::types::{ActionCall, ParamSpec};

    fn shop_space() -> Vec<ActionSpec> {
        vec![
            ActionSpec::new("search", "Search the catalog.", vec![ParamSpec::string("query")]),
            ActionSpec::new("click", "Click a target.", vec![ParamSpec::string("target")]),
            ActionSpec::think(),
            ActionSpec::finish(),
        ]
    }

    fn principles() -> PrincipleSet {
        PrincipleSet::seed_from_space(&shop_space())
    }

    fn rendered(mode: AgentMode, context: &[Step]) -> String {
        let cfg = ExecutorConfig::new(mode);
        let space = shop_space();
        let p = principles();
        let principles = matches!(mode, AgentMode::Pract).then_some(&p);
        let messages = render_prompt(
            &cfg,
            &TemplateStore::builtin(),
            "buy a red dress",
            context,
            principles,
            &space,
        )
        .unwrap();
        flatten_messages(&messages)
    }

    #[test]
    fn pract_prompt_contains_each_principle_exactly_once() {
        let text = rendered(AgentMode::Pract, &[]);
        for p in principles().entries.values() {
            assert_eq!(
                text.matches(&p.text).count(),
                1,
                "principle for {} not rendered exactly once",
                p.action
            );
        }
        assert_eq!(text.matches("buy a red dress").count(), 1);
    }

    #[test]
    fn act_and_react_prompts_contain_no_principles() {
        for mode in [AgentMode::Act, AgentMode::React] {
            let text = rendered(mode, &[]);
            for p in principles().entries.values() {
                assert!(!text.contains(&p.text), "{mode} prompt leaked a principle");
            }
        }
    }

    #[test]
    fn react_prompt_has_think_act_does_not() {
        let react = rendered(AgentMode::React, &[]);
        let act = rendered(AgentMode::Act, &[]);
        assert!(react.contains("- think ("));
        assert!(!act.contains("- think ("));
        // finish stays available in act mode.
        assert!(act.contains("- finish ("));
    }

    #[test]
    fn history_lines_render_in_step_order() {
        let steps: Vec<Step> = (1..=3)
            .map(|i| Step {
                action: ActionCall::new("search", &[("query", &format!("query {i}"))]),
                observation: crate::types::Observation::text(format!("obs {i}")),
            })
            .collect();
        let text = rendered(AgentMode::Pract, &steps);
        let p1 = text.find("1. search[query 1]").unwrap();
        let p2 = text.find("2. search[query 2]").unwrap();
        let p3 = text.find("3. search[query 3]").unwrap();
        assert!(p1 < p2 && p2 < p3);
        assert!(text.contains("-> obs 2"));
    }

    #[test]
    fn empty_history_renders_no_history_lines() {
        let text = rendered(AgentMode::Pract, &[]);
        assert!(!text.contains("1. "));
    }

    #[test]
    fn over_budget_history_elides_oldest() {
        let steps: Vec<Step> = (0..10)
            .map(|i| Step {
                action: ActionCall::new("search", &[("query", &format!("q{i} {}", "x".repeat(50)))]),
                observation: crate::types::Observation::text("y".repeat(50)),
            })
            .collect();
        let space = shop_space();
        let text = render_history(&steps, &space, 400);
        assert!(text.contains("earlier step(s) elided"));
        assert!(!text.contains("q0"));
        assert!(text.contains("q9"));
    }

    #[test]
    fn principle_mode_mismatch_is_rejected() {
        let cfg = ExecutorConfig::new(AgentMode::React);
        let space = shop_space();
        let p = principles();
        let err = render_prompt(&cfg, &TemplateStore::builtin(), "q", &[], Some(&p), &space)
            .unwrap_err();
        assert!(matches!(err, ExecutorError::PrincipleModeMismatch { .. }));
        let cfg = ExecutorConfig::new(AgentMode::Pract);
        let err =
            render_prompt(&cfg, &TemplateStore::builtin(), "q", &[], None, &space).unwrap_err();
        assert!(matches!(err, ExecutorError::PrincipleModeMismatch { .. }));
    }

    #[test]
    fn invalid_principles_rejected() {
        let cfg = ExecutorConfig::new(AgentMode::Pract);
        let space = shop_space();
        let mut p = principles();
        p.entries.remove("click");
        let err = render_prompt(&cfg, &TemplateStore::builtin(), "q", &[], Some(&p), &space)
            .unwrap_err();
        assert!(matches!(err, ExecutorError::InvalidPrincipleSet(_)));
    }

    struct NullEnv {
        calls: Vec<ActionCall>,
    }

    impl Environment for NullEnv {
        fn step(&mut self, call: &ActionCall) -> crate::types::Observation {
            self.calls.push(call.clone());
            crate::types::Observation::text(format!("did {}", call.action))
        }
        fn is_terminal(&self) -> bool {
            false
        }
        fn final_reward(&self) -> Option<f64> {
            Some(self.calls.len().min(1) as f64)
        }
    }

    struct NullFactory {
        space: Vec<ActionSpec>,
    }

    impl EnvFactory for NullFactory {
        fn action_space(&self) -> &[ActionSpec] {
            &self.space
        }
        fn make_env(&self, query: &str) -> Result<Box<dyn Environment>, EnvError> {
            if query == "broken" {
                return Err(EnvError::UnknownQuery(query.into()));
            }
            Ok(Box::new(NullEnv { calls: Vec::new() }))
        }
    }

    fn scripted(rules: Vec<ScriptRule>) -> ScriptedBackend {
        ScriptedBackend::new(rules).unwrap()
    }

    #[test]
    fn scripted_happy_path_three_steps() {
        let backend = scripted(vec![
            ScriptRule::substring("buy a hat", "think[plan the search]").once(),
            ScriptRule::substring("buy a hat", "search[hat]").once(),
            ScriptRule::substring("buy a hat", "finish[item A]").once(),
        ]);
        let cfg = ExecutorConfig::new(AgentMode::React);
        let mut env = NullEnv { calls: Vec::new() };
        let space = shop_space();
        let t = run_episode(
            &cfg,
            "buy a hat",
            &mut env,
            None,
            &backend,
            &TemplateStore::builtin(),
            &space,
        )
        .unwrap();
        assert_eq!(t.steps.len(), 3);
        assert!(t.steps[0].observation.is_null);
        assert!(!t.steps[1].observation.is_null);
        assert_eq!(t.terminated, TerminationCause::Finished);
        assert_eq!(t.reward, Some(1.0));
    }

    #[test]
    fn max_steps_caps_endless_agents() {
        let backend = scripted(vec![ScriptRule::substring("Task:", "search[x]")]);
        let mut cfg = ExecutorConfig::new(AgentMode::React);
        cfg.max_steps = 5;
        let mut env = NullEnv { calls: Vec::new() };
        let space = shop_space();
        let t = run_episode(
            &cfg,
            "loop forever",
            &mut env,
            None,
            &backend,
            &TemplateStore::builtin(),
            &space,
        )
        .unwrap();
        assert_eq!(t.steps.len(), 5);
        assert_eq!(t.terminated, TerminationCause::MaxSteps);
    }

    #[test]
    fn parse_retries_consume_exactly_retries_plus_one_calls() {
        let backend = scripted(vec![ScriptRule::substring("Task:", "not an action")]);
        let mut cfg = ExecutorConfig::new(AgentMode::React);
        cfg.parse_retries = 2;
        let mut env = NullEnv { calls: Vec::new() };
        let space = shop_space();
        let t = run_episode(
            &cfg,
            "garbage in",
            &mut env,
            None,
            &backend,
            &TemplateStore::builtin(),
            &space,
        )
        .unwrap();
        assert_eq!(t.terminated, TerminationCause::ParseFailure);
        assert_eq!(backend.call_count(), 3);
        assert!(t.steps.is_empty());
    }

    #[test]
    fn correction_message_quotes_the_error() {
        // First call garbage, second call (with correction) valid.
        let backend = scripted(vec![
            ScriptRule::substring("not a valid action", "finish[ok]"),
            ScriptRule::substring("Task:", "garbage"),
        ]);
        let cfg = ExecutorConfig::new(AgentMode::React);
        let mut env = NullEnv { calls: Vec::new() };
        let space = shop_space();
        let t = run_episode(
            &cfg,
            "recover",
            &mut env,
            None,
            &backend,
            &TemplateStore::builtin(),
            &space,
        )
        .unwrap();
        assert_eq!(t.terminated, TerminationCause::Finished);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn batch_aligns_with_input_and_isolates_failures() {
        let backend = scripted(vec![
            ScriptRule::substring("bad", "garbage"),
            ScriptRule::substring("Task:", "finish[done]"),
        ]);
        let mut cfg = ExecutorConfig::new(AgentMode::React);
        cfg.parse_retries = 0;
        let factory = NullFactory { space: shop_space() };
        let queries: Vec<String> =
            ["q one", "bad apple", "q three", "q four"].iter().map(|s| s.to_string()).collect();
        let ts = run_batch(&cfg, &queries, &factory, None, &backend, &TemplateStore::builtin());
        assert_eq!(ts.len(), 4);
        assert_eq!(ts[0].query, "q one");
        assert_eq!(ts[1].terminated, TerminationCause::ParseFailure);
        for i in [0, 2, 3] {
            assert_eq!(ts[i].terminated, TerminationCause::Finished);
        }
    }

    #[test]
    fn env_factory_failure_is_isolated() {
        let backend = scripted(vec![ScriptRule::substring("Task:", "finish[done]")]);
        let cfg = ExecutorConfig::new(AgentMode::React);
        let factory = NullFactory { space: shop_space() };
        let queries: Vec<String> = ["ok", "broken"].iter().map(|s| s.to_string()).collect();
        let ts = run_batch(&cfg, &queries, &factory, None, &backend, &TemplateStore::builtin());
        assert_eq!(ts[0].terminated, TerminationCause::Finished);
        assert_eq!(ts[1].terminated, TerminationCause::ParseFailure);
        assert!(ts[1].steps.is_empty());
    }

    #[test]
    fn parallel_equals_sequential() {
        let backend = scripted(vec![
            ScriptRule::substring("alpha", "search[alpha thing]"),
            ScriptRule::substring("beta", "search[beta thing]"),
            ScriptRule::substring("Task:", "finish[done]"),
        ]);
        let factory = NullFactory { space: shop_space() };
        let queries: Vec<String> = (0..8)
            .map(|i| format!("task {} {}", if i % 2 == 0 { "alpha" } else { "beta" }, i))
            .collect();
        let mut cfg = ExecutorConfig::new(AgentMode::React);
        cfg.max_steps = 2;
        cfg.workers = 1;
        let sequential =
            run_batch(&cfg, &queries, &factory, None, &backend, &TemplateStore::builtin());
        cfg.workers = 4;
        let parallel =
            run_batch(&cfg, &queries, &factory, None, &backend, &TemplateStore::builtin());
        assert_eq!(sequential, parallel);
    }
}

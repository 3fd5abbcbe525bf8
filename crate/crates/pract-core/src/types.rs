//! Shared domain types: actions, observations, trajectories, principles and
//! reflections, plus their line-oriented serialization.
//!
//! Every value is immutable after construction and safe to share across
//! worker threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Observation text attached to actions that never reach the environment.
pub const NULL_OBSERVATION_TEXT: &str = "OK.";

/// Name of the distinguished episode-terminating action.
pub const FINISH_ACTION: &str = "finish";

/// Name of the one-step reasoning action.
pub const THINK_ACTION: &str = "think";

/// Parameter type accepted by an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Enum { values: Vec<String> },
}

/// One named parameter of an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub param_type: ParamType,
    pub required: bool,
}

impl ParamSpec {
    pub fn string(name: &str) -> Self {
        Self {
            name: name.to_string(),
            param_type: ParamType::String,
            required: true,
        }
    }
}

/// An action available to the agent: its name, parameter schema and
/// human-readable description. `is_inner` marks actions (like `think`)
/// that are recorded in the trajectory but never forwarded to the
/// environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub is_inner: bool,
}

impl ActionSpec {
    pub fn new(name: &str, description: &str, params: Vec<ParamSpec>) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            params,
            is_inner: false,
        }
    }

    pub fn inner(name: &str, description: &str, params: Vec<ParamSpec>) -> Self {
        Self {
            is_inner: true,
            ..Self::new(name, description, params)
        }
    }

    /// The built-in `think` action shared by all environments.
    pub fn think() -> Self {
        Self::inner(
            THINK_ACTION,
            "Reason about the task in free text before acting. Has no effect on the environment.",
            vec![ParamSpec::string("thought")],
        )
    }

    /// The built-in terminal `finish` action shared by all environments.
    pub fn finish() -> Self {
        Self::inner(
            FINISH_ACTION,
            "End the episode and submit the given text as the final answer.",
            vec![ParamSpec::string("answer")],
        )
    }
}

/// Validates structural invariants of an action space: unique names and
/// non-empty enum value lists.
pub fn validate_action_space(space: &[ActionSpec]) -> Result<(), String> {
    let mut seen = std::collections::BTreeSet::new();
    for spec in space {
        if !seen.insert(spec.name.as_str()) {
            return Err(format!("duplicate action name: {}", spec.name));
        }
        for p in &spec.params {
            if let ParamType::Enum { values } = &p.param_type {
                if values.is_empty() {
                    return Err(format!(
                        "enum param {} of action {} has no values",
                        p.name, spec.name
                    ));
                }
            }
        }
    }
    Ok(())
}

/// A concrete invocation of an action, parsed from backend text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCall {
    pub action: String,
    pub args: BTreeMap<String, String>,
    pub raw_text: String,
}

impl ActionCall {
    pub fn new(action: &str, args: &[(&str, &str)]) -> Self {
        let args: BTreeMap<String, String> = args
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let rendered_args = args.values().cloned().collect::<Vec<_>>().join("; ");
        let raw_text = format!("{action}[{rendered_args}]");
        Self {
            action: action.to_string(),
            args,
            raw_text,
        }
    }

    /// Canonical `name[arg1; arg2]` rendering, args in schema order when a
    /// spec is provided and in key order otherwise.
    pub fn canonical(&self, spec: Option<&ActionSpec>) -> String {
        let args: Vec<&str> = match spec {
            Some(spec) => spec
                .params
                .iter()
                .filter_map(|p| self.args.get(&p.name).map(String::as_str))
                .collect(),
            None => self.args.values().map(String::as_str).collect(),
        };
        format!("{}[{}]", self.action, args.join("; "))
    }
}

/// Normalizes an argument value for action-call equality: trim, case-fold
/// and collapse internal whitespace.
pub fn normalize_arg(value: &str) -> String {
    value
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Normalized `(name, args)` key used for set-based action matching.
pub fn call_identity(call: &ActionCall) -> (String, BTreeMap<String, String>) {
    let args = call
        .args
        .iter()
        .map(|(k, v)| (k.clone(), normalize_arg(v)))
        .collect();
    (call.action.clone(), args)
}

/// Result of executing (or skipping) one action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub is_null: bool,
}

impl Observation {
    /// The fixed null observation paired with inner actions.
    pub fn null() -> Self {
        Self {
            text: NULL_OBSERVATION_TEXT.to_string(),
            is_null: true,
        }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            is_null: false,
        }
    }
}

/// One (action, observation) pair of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: ActionCall,
    pub observation: Observation,
}

/// Why an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Finished,
    MaxSteps,
    ParseFailure,
}

impl fmt::Display for TerminationCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TerminationCause::Finished => "finished",
            TerminationCause::MaxSteps => "max_steps",
            TerminationCause::ParseFailure => "parse_failure",
        };
        f.write_str(s)
    }
}

/// The full record of one episode: the task query, the ordered steps, the
/// environment reward (when one was produced) and the stop cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub query: String,
    pub steps: Vec<Step>,
    pub reward: Option<f64>,
    pub terminated: TerminationCause,
}

impl Trajectory {
    /// Stable identifier derived from the serialized record.
    pub fn id(&self) -> String {
        format!("t{:016x}", fnv1a64(serialize_trajectory(self).as_bytes()))
    }

    /// Non-inner calls, in execution order.
    pub fn executed_calls(&self) -> impl Iterator<Item = &ActionCall> {
        self.steps
            .iter()
            .filter(|s| !s.observation.is_null)
            .map(|s| &s.action)
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// A per-action guideline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principle {
    pub action: String,
    pub text: String,
}

/// Where a principle set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    RpoTraj,
    RpoBatch,
    Manual,
}

/// A versioned map from action name to principle; the optimization
/// variable. Versions strictly increase along parent chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleSet {
    pub entries: BTreeMap<String, Principle>,
    pub version: u64,
    pub parent_version: Option<u64>,
    pub provenance: Provenance,
}

impl PrincipleSet {
    /// Version-0 seed set with one principle per action, initialized from
    /// the action descriptions.
    pub fn seed_from_space(space: &[ActionSpec]) -> Self {
        let entries = space
            .iter()
            .map(|spec| {
                (
                    spec.name.clone(),
                    Principle {
                        action: spec.name.clone(),
                        text: format!("Use this action when appropriate: {}", spec.description),
                    },
                )
            })
            .collect();
        Self {
            entries,
            version: 0,
            parent_version: None,
            provenance: Provenance::Seed,
        }
    }

    /// Child set with the given entries, bumped version and provenance.
    pub fn child(&self, entries: BTreeMap<String, Principle>, provenance: Provenance) -> Self {
        Self {
            entries,
            version: self.version + 1,
            parent_version: Some(self.version),
            provenance,
        }
    }

    pub fn text_for(&self, action: &str) -> Option<&str> {
        self.entries.get(action).map(|p| p.text.as_str())
    }
}

/// One violation found by [`validate_principle_set`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrincipleViolation {
    /// The action space contains this action but the set has no entry.
    MissingAction(String),
    /// The set has an entry for an action not in the space.
    UnknownAction(String),
    /// The entry exists but its text is empty or whitespace.
    EmptyText(String),
    /// The map key and the principle's own action name disagree.
    KeyMismatch { key: String, action: String },
}

impl fmt::Display for PrincipleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrincipleViolation::MissingAction(a) => write!(f, "missing principle for action {a}"),
            PrincipleViolation::UnknownAction(a) => write!(f, "principle for unknown action {a}"),
            PrincipleViolation::EmptyText(a) => write!(f, "empty principle text for action {a}"),
            PrincipleViolation::KeyMismatch { key, action } => {
                write!(f, "entry key {key} names action {action}")
            }
        }
    }
}

/// Checks that the set's key set equals the action-space names and that all
/// texts are non-empty. Never aborts; returns the full violation list
/// (empty means ok).
pub fn validate_principle_set(
    set: &PrincipleSet,
    space: &[ActionSpec],
) -> Vec<PrincipleViolation> {
    let mut violations = Vec::new();
    for spec in space {
        match set.entries.get(&spec.name) {
            None => violations.push(PrincipleViolation::MissingAction(spec.name.clone())),
            Some(p) if p.text.trim().is_empty() => {
                violations.push(PrincipleViolation::EmptyText(spec.name.clone()))
            }
            Some(_) => {}
        }
    }
    for (key, principle) in &set.entries {
        if !space.iter().any(|s| &s.name == key) {
            violations.push(PrincipleViolation::UnknownAction(key.clone()));
        }
        if key != &principle.action {
            violations.push(PrincipleViolation::KeyMismatch {
                key: key.clone(),
                action: principle.action.clone(),
            });
        }
    }
    violations
}

/// Which kind of critique the reflector produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectorMode {
    #[serde(rename = "self")]
    SelfReflect,
    Reward,
}

impl fmt::Display for ReflectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReflectorMode::SelfReflect => f.write_str("self"),
            ReflectorMode::Reward => f.write_str("reward"),
        }
    }
}

/// A critique of one trajectory against the current principles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub query: String,
    pub trajectory_id: String,
    pub text: String,
    pub mode: ReflectorMode,
    pub reward: Option<f64>,
    /// Empty or whitespace-only critiques are kept but flagged; the
    /// optimizer skips them.
    pub degenerate: bool,
}

/// Serializes a trajectory to a single-line record with stable field order.
pub fn serialize_trajectory(t: &Trajectory) -> String {
    serde_json::to_string(t).expect("trajectory serialization cannot fail")
}

pub fn deserialize_trajectory(line: &str) -> Result<Trajectory, serde_json::Error> {
    serde_json::from_str(line)
}

/// Serializes a reflection to a single-line record.
pub fn serialize_reflection(r: &Reflection) -> String {
    serde_json::to_string(r).expect("reflection serialization cannot fail")
}

pub fn deserialize_reflection(line: &str) -> Result<Reflection, serde_json::Error> {
    serde_json::from_str(line)
}

/// Serializes a principle set to its stable on-disk document form.
pub fn serialize_principle_set(p: &PrincipleSet) -> String {
    let mut s = serde_json::to_string_pretty(p).expect("principle serialization cannot fail");
    s.push('\n');
    s
}

pub fn deserialize_principle_set(text: &str) -> Result<PrincipleSet, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shop_space() -> Vec<ActionSpec> {
        vec![
            ActionSpec::new("search", "Search the catalog.", vec![ParamSpec::string("query")]),
            ActionSpec::new("click", "Click a target.", vec![ParamSpec::string("target")]),
        ]
    }

    fn principles_for(names: &[&str]) -> PrincipleSet {
        let entries = names
            .iter()
            .map(|n| {
                (
                    n.to_string(),
                    Principle {
                        action: n.to_string(),
                        text: format!("guideline for {n}"),
                    },
                )
            })
            .collect();
        PrincipleSet {
            entries,
            version: 0,
            parent_version: None,
            provenance: Provenance::Seed,
        }
    }

    #[test]
    fn empty_trajectory_round_trips() {
        let t = Trajectory {
            query: "q".into(),
            steps: vec![],
            reward: None,
            terminated: TerminationCause::Finished,
        };
        let line = serialize_trajectory(&t);
        assert!(!line.contains('\n'));
        assert!(line.contains("\"steps\":[]"));
        assert_eq!(deserialize_trajectory(&line).unwrap(), t);
    }

    #[test]
    fn inner_step_round_trips_with_null_flag() {
        let t = Trajectory {
            query: "buy a dress".into(),
            steps: vec![
                Step {
                    action: ActionCall::new("think", &[("thought", "search first")]),
                    observation: Observation::null(),
                },
                Step {
                    action: ActionCall::new("search", &[("query", "red dress")]),
                    observation: Observation::text("Results: ..."),
                },
            ],
            reward: Some(0.5),
            terminated: TerminationCause::Finished,
        };
        let back = deserialize_trajectory(&serialize_trajectory(&t)).unwrap();
        assert!(back.steps[0].observation.is_null);
        assert_eq!(back.steps[0].observation.text, NULL_OBSERVATION_TEXT);
        assert_eq!(back, t);
    }

    #[test]
    fn validate_accepts_exact_match() {
        let set = principles_for(&["search", "click"]);
        assert!(validate_principle_set(&set, &shop_space()).is_empty());
    }

    #[test]
    fn validate_reports_missing_action() {
        let set = principles_for(&["search"]);
        let violations = validate_principle_set(&set, &shop_space());
        assert_eq!(
            violations,
            vec![PrincipleViolation::MissingAction("click".into())]
        );
    }

    #[test]
    fn validate_reports_unknown_action() {
        let set = principles_for(&["search", "click", "buy"]);
        let violations = validate_principle_set(&set, &shop_space());
        assert_eq!(
            violations,
            vec![PrincipleViolation::UnknownAction("buy".into())]
        );
    }

    #[test]
    fn validate_reports_empty_text() {
        let mut set = principles_for(&["search", "click"]);
        set.entries.get_mut("click").unwrap().text = "   ".into();
        let violations = validate_principle_set(&set, &shop_space());
        assert_eq!(violations, vec![PrincipleViolation::EmptyText("click".into())]);
    }

    #[test]
    fn normalization_collapses_whitespace_and_case() {
        assert_eq!(normalize_arg("  Red   Long\tDress "), "red long dress");
        let a = ActionCall::new("search", &[("query", "Red  Dress")]);
        let b = ActionCall::new("search", &[("query", "red dress")]);
        assert_eq!(call_identity(&a), call_identity(&b));
    }

    #[test]
    fn version_chain_increases() {
        let seed = principles_for(&["search", "click"]);
        let child = seed.child(seed.entries.clone(), Provenance::RpoBatch);
        assert_eq!(child.version, 1);
        assert_eq!(child.parent_version, Some(0));
        let grandchild = child.child(child.entries.clone(), Provenance::RpoTraj);
        assert_eq!(grandchild.version, 2);
        assert_eq!(grandchild.parent_version, Some(1));
    }

    #[test]
    fn duplicate_action_names_rejected() {
        let mut space = shop_space();
        space.push(ActionSpec::new("search", "again", vec![]));
        assert!(validate_action_space(&space).is_err());
    }

    #[test]
    fn trajectory_id_is_stable() {
        let t = Trajectory {
            query: "q".into(),
            steps: vec![],
            reward: None,
            terminated: TerminationCause::MaxSteps,
        };
        assert_eq!(t.id(), t.id());
        let other = Trajectory {
            query: "different".into(),
            ..t.clone()
        };
        assert_ne!(t.id(), other.id());
    }
}

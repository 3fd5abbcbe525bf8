//! Principle-conditioned LLM agents with reflective principle
//! optimization.
//!
//! An executor agent selects actions under per-action textual principles;
//! a reflector critiques completed trajectories; an optimizer rewrites the
//! principles from those critiques, either per trajectory with a final
//! summarizing merge or in one batched call. A harness wires the loop
//! together over simulated tool and shopping environments with
//! train/validation/test splits, early stopping and multi-seed reporting.

pub mod backend;
pub mod env;
pub mod executor;
pub mod harness;
pub mod reflection;
pub mod rpo;
pub mod store;
pub mod template;
pub mod types;

pub use backend::{Backend, BackendConfig, BackendKind, ChatMessage};
pub use env::{load_task_suite, save_task_suite, TaskSuite};
pub use executor::{parse_action, render_prompt, run_batch, run_episode, AgentMode, ExecutorConfig};
pub use harness::{
    evaluate, run, split_tasks, train, train_self_reflect, OptimizationRun, RunConfig, RunInputs,
};
pub use reflection::{reflect, reflect_all, ReflectorConfig};
pub use rpo::{optimize_one, parse_principles, rpo_batch, rpo_traj, RpoConfig, RpoMethod};
pub use types::{
    validate_principle_set, ActionCall, ActionSpec, Observation, Principle, PrincipleSet,
    Reflection, ReflectorMode, Step, TerminationCause, Trajectory,
};

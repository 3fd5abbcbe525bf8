//! Full optimization runs: task splitting, batch sampling, the
//! execute → reflect → optimize loop, validation-based early stopping,
//! multi-seed aggregation and artifact emission.
//!
//! Two protocols exist. The reward protocol splits tasks 3:1:1 into
//! train/validation/test, samples training batches, stops early on
//! validation and reports the best version on test. The self-reflection
//! protocol has no split and no held-out signal: it iterates a fixed
//! number of times over the full task pool and evaluates the final
//! principles on the same tasks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{build_backend, Backend};
use crate::env::{load_task_suite, EnvFactory, TaskSuite};
use crate::executor::{run_batch, AgentMode, ExecutorConfig};
use crate::reflection::{reflect_all, ReflectError};
use crate::rpo::optimize;
use crate::store::{write_reflections, write_trajectories, PrincipleStore};
use crate::template::TemplateStore;
use crate::types::{PrincipleSet, Reflection, ReflectorMode, Trajectory};

mod config;
mod report;

pub use config::{RoleBackendConfigs, RunConfig, TemplateIds};
pub use report::{emit_report, format_score, render_summary_table};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    InvalidConfig { path: String, message: String },
    #[error("too few tasks: {count} cannot be split {ratio:?}")]
    TooFewTasks { count: usize, ratio: (u32, u32, u32) },
    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Backend(#[from] crate::backend::BackendError),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error(transparent)]
    Rpo(#[from] crate::rpo::RpoError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error("serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Disjoint, exhaustive index partition of a task list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `count` tasks by the given ratio. Sizes are proportional with
/// the remainder assigned to train; the shuffle is keyed by `seed` and the
/// result is deterministic per (count, ratio, seed).
pub fn split_tasks(
    count: usize,
    ratio: (u32, u32, u32),
    seed: u64,
) -> Result<SplitIndices, HarnessError> {
    let (r_train, r_val, r_test) = ratio;
    let total_units = (r_train + r_val + r_test) as usize;
    if total_units == 0 || count < total_units {
        return Err(HarnessError::TooFewTasks { count, ratio });
    }
    let base = count / total_units;
    let val_len = base * r_val as usize;
    let test_len = base * r_test as usize;
    let train_len = count - val_len - test_len;

    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let train = indices[..train_len].to_vec();
    let val = indices[train_len..train_len + val_len].to_vec();
    let test = indices[train_len + val_len..].to_vec();
    Ok(SplitIndices { train, val, test })
}

/// Mean episode reward over a task list; failed or rewardless episodes
/// count as 0. The episodes themselves are returned for persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub mean: f64,
    pub trajectories: Vec<Trajectory>,
}

/// Runs one episode per query with the given principles and returns the
/// arithmetic mean of rewards.
pub fn evaluate(
    exec_cfg: &ExecutorConfig,
    queries: &[String],
    principles: &PrincipleSet,
    backend: &dyn Backend,
    factory: &dyn EnvFactory,
    templates: &TemplateStore,
) -> EvalOutcome {
    let shown = matches!(exec_cfg.mode, AgentMode::Pract).then_some(principles);
    let trajectories = run_batch(exec_cfg, queries, factory, shown, backend, templates);
    let mean = mean_reward(&trajectories);
    EvalOutcome { mean, trajectories }
}

pub fn mean_reward(trajectories: &[Trajectory]) -> f64 {
    if trajectories.is_empty() {
        return 0.0;
    }
    let sum: f64 = trajectories.iter().map(|t| t.reward.unwrap_or(0.0)).sum();
    sum / trajectories.len() as f64
}

/// One backend instance per agent role.
pub struct RoleBackends {
    pub executor: Arc<dyn Backend>,
    pub reflector: Arc<dyn Backend>,
    pub optimizer: Arc<dyn Backend>,
}

/// Everything a run needs, resolved and in memory.
pub struct RunInputs {
    pub config: RunConfig,
    pub suite: TaskSuite,
    pub templates: TemplateStore,
    pub seed_principles: PrincipleSet,
    pub backends: RoleBackends,
}

impl RunInputs {
    /// Loads the config file and everything it references.
    pub fn from_config_file(path: &Path) -> Result<Self, HarnessError> {
        let config = RunConfig::load(path)?;
        Self::from_config(config)
    }

    pub fn from_config(config: RunConfig) -> Result<Self, HarnessError> {
        let suite = load_task_suite(&config.suite)?;
        let templates = match &config.template_dir {
            Some(dir) => TemplateStore::builtin_with_dir(dir)?,
            None => TemplateStore::builtin(),
        };
        let seed_principles = match &config.seed_principles {
            Some(path) => crate::store::load_principle_file(path)?,
            None => PrincipleSet::seed_from_space(suite.action_space()),
        };
        let base = Path::new(".");
        let backends = RoleBackends {
            executor: build_backend(&config.backends.executor, base)?,
            reflector: build_backend(&config.backends.reflector, base)?,
            optimizer: build_backend(&config.backends.optimizer, base)?,
        };
        Ok(Self {
            config,
            suite,
            templates,
            seed_principles,
            backends,
        })
    }
}

/// One training iteration's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub principle_version: u64,
    pub train_reward: f64,
    pub val_reward: Option<f64>,
    #[serde(default)]
    pub no_update: bool,
}

/// One seed's full loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub split: Option<SplitIndices>,
    pub iterations: Vec<IterationRecord>,
    pub best_version: u64,
    pub best_val: Option<f64>,
    pub stop_iter: usize,
    pub test_score: Option<f64>,
}

/// The record of one full optimization run across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub config: RunConfig,
    pub env_id: String,
    pub protocol: ReflectorMode,
    pub seed_runs: Vec<SeedRun>,
    pub aggregate_test_mean: Option<f64>,
    pub complete: bool,
}

impl OptimizationRun {
    pub fn run_record_path(output_dir: &Path) -> PathBuf {
        output_dir.join("run.json")
    }

    pub fn load(output_dir: &Path) -> Result<Self, HarnessError> {
        let path = Self::run_record_path(output_dir);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, output_dir: &Path) -> Result<(), HarnessError> {
        let path = Self::run_record_path(output_dir);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

/// Deterministic without-replacement batch sampler over the train pool;
/// reshuffles the whole pool when fewer than a full batch remains.
struct BatchSampler {
    pool: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(pool: Vec<usize>, seed: u64) -> Self {
        let mut sampler = Self {
            pool,
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9)),
        };
        sampler.reshuffle();
        sampler
    }

    fn reshuffle(&mut self) {
        self.pool.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.pool.len());
        if self.cursor + size > self.pool.len() {
            self.reshuffle();
        }
        let batch = self.pool[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        batch
    }
}

fn queries_at(all: &[String], indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&i| all[i].clone()).collect()
}

fn usable_reflections(
    results: Vec<Result<Reflection, ReflectError>>,
) -> (Vec<Reflection>, usize) {
    let mut ok = Vec::new();
    let mut failed = 0usize;
    for r in results {
        match r {
            Ok(reflection) => ok.push(reflection),
            Err(err) => {
                failed += 1;
                log::warn!("reflection failed: {err}");
            }
        }
    }
    (ok, failed)
}

struct SeedLoop<'a> {
    inputs: &'a RunInputs,
    seed_dir: PathBuf,
    principle_store: PrincipleStore,
    history: Vec<PrincipleSet>,
}

impl<'a> SeedLoop<'a> {
    fn new(inputs: &'a RunInputs, seed: u64) -> Result<Self, HarnessError> {
        let seed_dir = inputs.config.output_dir.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&seed_dir).map_err(|e| io_err(&seed_dir, e))?;
        let principle_store = PrincipleStore::new(seed_dir.join("principles"));
        principle_store.save(&inputs.seed_principles)?;
        Ok(Self {
            inputs,
            seed_dir,
            principle_store,
            history: vec![inputs.seed_principles.clone()],
        })
    }

    fn current(&self) -> &PrincipleSet {
        self.history.last().expect("seed version always present")
    }

    fn version(&self, version: u64) -> &PrincipleSet {
        self.history
            .iter()
            .find(|p| p.version == version)
            .expect("recorded version exists")
    }

    /// One execute → reflect → optimize iteration over the given batch.
    /// Returns the train-batch mean reward and whether the optimizer made
    /// an update.
    fn iterate(&mut self, iteration: usize, batch: &[String]) -> Result<(f64, bool), HarnessError> {
        let cfg = &self.inputs.config;
        let exec_cfg = cfg.executor_config();
        let principles = self.current().clone();
        let shown = matches!(cfg.mode, AgentMode::Pract).then_some(&principles);

        let trajectories = run_batch(
            &exec_cfg,
            batch,
            &self.inputs.suite,
            shown,
            self.inputs.backends.executor.as_ref(),
            &self.inputs.templates,
        );
        let train_reward = mean_reward(&trajectories);
        write_trajectories(
            &self.seed_dir.join(format!("iter_{iteration:03}.train.jsonl")),
            &trajectories,
        )?;

        let reflections = reflect_all(
            &cfg.reflector_config(),
            &trajectories,
            &principles,
            self.inputs.backends.reflector.as_ref(),
            &self.inputs.templates,
            self.inputs.suite.action_space(),
        );
        let (reflections, _failed) = usable_reflections(reflections);
        write_reflections(
            &self
                .seed_dir
                .join(format!("iter_{iteration:03}.reflections.jsonl")),
            &reflections,
        )?;

        let outcome = optimize(
            &cfg.rpo_config(),
            &reflections,
            &principles,
            self.inputs.backends.optimizer.as_ref(),
            &self.inputs.templates,
            self.inputs.suite.action_space(),
        )?;
        for warning in &outcome.warnings {
            log::warn!("iteration {iteration}: {warning}");
        }
        self.principle_store.save(&outcome.principles)?;
        self.history.push(outcome.principles);
        Ok((train_reward, !outcome.no_update))
    }

    fn evaluate_split(
        &self,
        name: &str,
        queries: &[String],
        principles: &PrincipleSet,
    ) -> Result<EvalOutcome, HarnessError> {
        let outcome = evaluate(
            &self.inputs.config.executor_config(),
            queries,
            principles,
            self.inputs.backends.executor.as_ref(),
            &self.inputs.suite,
            &self.inputs.templates,
        );
        write_trajectories(&self.seed_dir.join(format!("{name}.jsonl")), &outcome.trajectories)?;
        Ok(outcome)
    }
}

/// Reward-protocol training for every configured seed: split, iterate
/// with early stopping on validation, report the best version on test.
pub fn train(inputs: &RunInputs) -> Result<OptimizationRun, HarnessError> {
    if inputs.config.reflector != ReflectorMode::Reward {
        return Err(HarnessError::ProtocolMismatch(
            "train implements the reward protocol; use train_self_reflect for self mode".into(),
        ));
    }
    if !inputs.suite.emits_rewards() {
        return Err(HarnessError::ProtocolMismatch(
            "reward reflector requires a reward-emitting environment".into(),
        ));
    }
    run_seeds(inputs, train_one_seed)
}

fn train_one_seed(inputs: &RunInputs, seed: u64) -> Result<SeedRun, HarnessError> {
    let cfg = &inputs.config;
    let queries = inputs.suite.queries();
    let split = split_tasks(queries.len(), cfg.split_ratio, seed)?;
    let val_queries = queries_at(&queries, &split.val);
    let test_queries = queries_at(&queries, &split.test);

    let mut state = SeedLoop::new(inputs, seed)?;
    let mut sampler = BatchSampler::new(split.train.clone(), seed);
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(f64, u64, usize)> = None; // (val, version, iteration)

    let mut stop_iter = 0;
    for iteration in 1..=cfg.max_iters {
        stop_iter = iteration;
        let batch = queries_at(&queries, &sampler.next_batch(cfg.batch_size));
        let (train_reward, updated) = state.iterate(iteration, &batch)?;
        let version = state.current().version;
        let val = state
            .evaluate_split(&format!("iter_{iteration:03}.val"), &val_queries, state.current())?
            .mean;
        iterations.push(IterationRecord {
            iteration,
            principle_version: version,
            train_reward,
            val_reward: Some(val),
            no_update: !updated,
        });

        // Strict improvement moves the best; ties keep the earliest
        // version.
        let improved = best.map(|(b, _, _)| val > b).unwrap_or(true);
        if improved {
            best = Some((val, version, iteration));
        }
        let best_iter = best.expect("set above").2;
        if iteration - best_iter >= cfg.patience {
            break;
        }
    }

    let (best_val, best_version, _) = best.expect("max_iters >= 1");
    let test = state.evaluate_split("test", &test_queries, state.version(best_version))?;
    Ok(SeedRun {
        seed,
        split: Some(split),
        iterations,
        best_version,
        best_val: Some(best_val),
        stop_iter,
        test_score: Some(test.mean),
    })
}

/// Self-reflection protocol: no split, fixed iteration count, final
/// principles evaluated on the full task pool.
pub fn train_self_reflect(inputs: &RunInputs) -> Result<OptimizationRun, HarnessError> {
    if inputs.config.reflector != ReflectorMode::SelfReflect {
        return Err(HarnessError::ProtocolMismatch(
            "train_self_reflect requires reflector mode self".into(),
        ));
    }
    run_seeds(inputs, self_reflect_one_seed)
}

fn self_reflect_one_seed(inputs: &RunInputs, seed: u64) -> Result<SeedRun, HarnessError> {
    let cfg = &inputs.config;
    let queries = inputs.suite.queries();
    let pool: Vec<usize> = (0..queries.len()).collect();

    let mut state = SeedLoop::new(inputs, seed)?;
    let mut sampler = BatchSampler::new(pool, seed);
    let mut iterations = Vec::new();

    for iteration in 1..=cfg.max_iters {
        let batch = queries_at(&queries, &sampler.next_batch(cfg.batch_size));
        let (train_reward, updated) = state.iterate(iteration, &batch)?;
        iterations.push(IterationRecord {
            iteration,
            principle_version: state.current().version,
            train_reward,
            val_reward: None,
            no_update: !updated,
        });
    }

    let final_version = state.current().version;
    let test = state.evaluate_split("test", &queries, state.current())?;
    Ok(SeedRun {
        seed,
        split: None,
        iterations,
        best_version: final_version,
        best_val: None,
        stop_iter: cfg.max_iters,
        test_score: Some(test.mean),
    })
}

/// Dispatches on the configured reflector mode.
pub fn run(inputs: &RunInputs) -> Result<OptimizationRun, HarnessError> {
    match inputs.config.reflector {
        ReflectorMode::Reward => train(inputs),
        ReflectorMode::SelfReflect => train_self_reflect(inputs),
    }
}

fn run_seeds(
    inputs: &RunInputs,
    run_seed: fn(&RunInputs, u64) -> Result<SeedRun, HarnessError>,
) -> Result<OptimizationRun, HarnessError> {
    let out_dir = &inputs.config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_config_snapshot(inputs)?;

    let mut record = OptimizationRun {
        config: inputs.config.clone(),
        env_id: inputs.suite.env_id(),
        protocol: inputs.config.reflector,
        seed_runs: Vec::new(),
        aggregate_test_mean: None,
        complete: false,
    };

    for &seed in &inputs.config.seeds {
        match run_seed(inputs, seed) {
            Ok(seed_run) => record.seed_runs.push(seed_run),
            Err(err) => {
                // Persist the partial record before aborting.
                record.save(out_dir)?;
                emit_report(&record, out_dir)?;
                write_manifest(out_dir)?;
                return Err(err);
            }
        }
    }

    let scores: Vec<f64> = record.seed_runs.iter().filter_map(|s| s.test_score).collect();
    if !scores.is_empty() {
        record.aggregate_test_mean = Some(scores.iter().sum::<f64>() / scores.len() as f64);
    }
    record.complete = true;
    record.save(out_dir)?;
    emit_report(&record, out_dir)?;
    write_manifest(out_dir)?;
    Ok(record)
}

fn write_config_snapshot(inputs: &RunInputs) -> Result<(), HarnessError> {
    let path = inputs.config.output_dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&inputs.config)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

/// Writes `manifest.json` listing every artifact under the output dir,
/// sorted by path.
pub fn write_manifest(output_dir: &Path) -> Result<(), HarnessError> {
    let mut files = Vec::new();
    collect_files(output_dir, output_dir, &mut files)?;
    files.sort();
    files.retain(|f| f != "manifest.json");
    let path = output_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&serde_json::json!({ "files": files }))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

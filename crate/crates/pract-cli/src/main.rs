//! `pract` command line: run single episodes, drive full optimization
//! runs, evaluate principle files, generate task suites and re-emit run
//! reports.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use pract_core::env::gen::{generate_suite, ENV_IDS};
use pract_core::env::{save_task_suite, EnvFactory};
use pract_core::harness::{
    emit_report, evaluate, format_score, render_summary_table, run, split_tasks, write_manifest,
    OptimizationRun, RunInputs,
};
use pract_core::store::load_principle_file;
use pract_core::types::ReflectorMode;
use pract_core::AgentMode;

#[derive(Parser)]
#[command(name = "pract", about = "Principle-conditioned agents with reflective optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and print the trajectory.
    Run {
        /// Run config file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Index of the task to run within the suite.
        #[arg(long, default_value_t = 0)]
        task: usize,
        /// Principle document to execute under (defaults to the config's
        /// seed principles).
        #[arg(long)]
        principles: Option<PathBuf>,
    },
    /// Run the full optimization loop described by a config file.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a principle document on a task split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Principle document to evaluate.
        #[arg(long)]
        principles: PathBuf,
        /// Split to evaluate: train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Generate a task suite file from a seed.
    GenSuite {
        /// Environment id: academia, movie, weather or shop.
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output file (defaults to suites/<env>.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit the results table and curve files for a finished run.
    Report {
        /// Run output directory containing run.json.
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            task,
            principles,
        } => cmd_run(&config, task, principles),
        Command::Optimize { config, output } => cmd_optimize(&config, output),
        Command::Eval {
            config,
            principles,
            split,
        } => cmd_eval(&config, &principles, &split),
        Command::GenSuite { env, seed, out } => cmd_gen_suite(&env, seed, out),
        Command::Report { run } => cmd_report(&run),
    }
}

fn load_inputs(config: &std::path::Path) -> Result<RunInputs> {
    RunInputs::from_config_file(config)
        .with_context(|| format!("failed to load run inputs from {}", config.display()))
}

fn cmd_run(config: &std::path::Path, task: usize, principles: Option<PathBuf>) -> Result<()> {
    let inputs = load_inputs(config)?;
    let queries = inputs.suite.queries();
    let query = queries
        .get(task)
        .ok_or_else(|| anyhow!("task index {task} out of range (suite has {})", queries.len()))?;
    let principle_set = match principles {
        Some(path) => load_principle_file(&path)
            .with_context(|| format!("failed to load principles {}", path.display()))?,
        None => inputs.seed_principles.clone(),
    };

    let exec_cfg = inputs.config.executor_config();
    let shown = matches!(exec_cfg.mode, AgentMode::Pract).then_some(&principle_set);
    let mut env = inputs.suite.make_env(query)?;
    let trajectory = pract_core::run_episode(
        &exec_cfg,
        query,
        env.as_mut(),
        shown,
        inputs.backends.executor.as_ref(),
        &inputs.templates,
        inputs.suite.action_space(),
    )?;

    println!("task: {query}");
    for (i, step) in trajectory.steps.iter().enumerate() {
        let spec = inputs
            .suite
            .action_space()
            .iter()
            .find(|s| s.name == step.action.action);
        println!("{:>3}. {}", i + 1, step.action.canonical(spec));
        for line in step.observation.text.lines() {
            println!("     -> {line}");
        }
    }
    let reward = trajectory
        .reward
        .map(format_score)
        .unwrap_or_else(|| "n/a".to_string());
    println!("terminated: {}  reward: {reward}", trajectory.terminated);
    Ok(())
}

fn cmd_optimize(config: &std::path::Path, output: Option<PathBuf>) -> Result<()> {
    let mut inputs = load_inputs(config)?;
    if let Some(output) = output {
        inputs.config.output_dir = output;
    }
    let record = run(&inputs).context("optimization run failed")?;
    print!("{}", render_summary_table(&record));
    println!("artifacts: {}", inputs.config.output_dir.display());
    Ok(())
}

fn cmd_eval(config: &std::path::Path, principles: &std::path::Path, split: &str) -> Result<()> {
    let inputs = load_inputs(config)?;
    let principle_set = load_principle_file(principles)
        .with_context(|| format!("failed to load principles {}", principles.display()))?;
    let queries = inputs.suite.queries();

    let selected: Vec<String> = if split == "all" {
        queries.clone()
    } else {
        if inputs.config.reflector != ReflectorMode::Reward {
            bail!("split \"{split}\" requires the reward protocol; self-reflection runs use --split all");
        }
        let seed = *inputs.config.seeds.first().expect("validated non-empty");
        let indices = split_tasks(queries.len(), inputs.config.split_ratio, seed)?;
        let picked = match split {
            "train" => indices.train,
            "val" => indices.val,
            "test" => indices.test,
            other => bail!("unknown split {other:?}; expected train, val, test or all"),
        };
        picked.into_iter().map(|i| queries[i].clone()).collect()
    };

    let outcome = evaluate(
        &inputs.config.executor_config(),
        &selected,
        &principle_set,
        inputs.backends.executor.as_ref(),
        &inputs.suite,
        &inputs.templates,
    );
    for t in &outcome.trajectories {
        let reward = t.reward.map(format_score).unwrap_or_else(|| "n/a".into());
        println!("{reward}  [{}]  {}", t.terminated, t.query);
    }
    println!(
        "mean reward over {} task(s) [{split}]: {}",
        outcome.trajectories.len(),
        format_score(outcome.mean)
    );
    Ok(())
}

fn cmd_gen_suite(env: &str, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let suite = generate_suite(env, seed)
        .ok_or_else(|| anyhow!("unknown env {env:?}; expected one of {ENV_IDS:?}"))?;
    let path = out.unwrap_or_else(|| PathBuf::from(format!("suites/{env}.json")));
    save_task_suite(&path, &suite)?;
    println!("wrote {} tasks to {}", suite.len(), path.display());
    Ok(())
}

fn cmd_report(run_dir: &std::path::Path) -> Result<()> {
    let record = OptimizationRun::load(run_dir)
        .with_context(|| format!("no run record under {}", run_dir.display()))?;
    let written = emit_report(&record, run_dir)?;
    write_manifest(run_dir)?;
    print!("{}", render_summary_table(&record));
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

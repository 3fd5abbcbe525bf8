//! Regenerates `scenarios/synthetic_improvement/`: a fully scripted
//! weather run in which the seed principles steer the executor to the
//! wrong lookup on four of six tasks (mean reward 2/6), and one batch
//! optimization iteration rewrites the `get_daily_high` principle so the
//! re-executed tasks all score 1.0.
//!
//! The executor script keys on a marker embedded in the principle text
//! (`guideline v0` / `guideline v1`), so the improvement flows entirely
//! through the execute -> reflect -> optimize -> re-execute loop.
//!
//! Run with: cargo run -p pract-core --example make_scenario

use std::collections::BTreeMap;
use std::path::Path;

use pract_core::backend::ScriptRule;
use pract_core::env::tool::{tool_action_space, KnowledgeBase, Record, ToolDomain, ToolSuite};
use pract_core::env::{save_task_suite, TaskSuite, ToolTask};
use pract_core::types::{
    serialize_principle_set, ActionCall, Principle, PrincipleSet, Provenance,
};

const CITIES: [&str; 6] = ["Arlow", "Bexley", "Corvan", "Dunmore", "Eastvale", "Fallbrook"];
const DATE: &str = "2024-01-05";

/// Tasks where the seed principles already lead to the right call.
const RIGHT_UNDER_SEED: [&str; 2] = ["Arlow", "Bexley"];

fn daily_row(city: &str, high: i32) -> Record {
    let mut row = Record::new();
    row.insert("city".into(), city.into());
    row.insert("date".into(), DATE.into());
    row.insert("high_c".into(), high.to_string());
    row.insert("low_c".into(), (high - 7).to_string());
    row.insert("precip_mm".into(), "3".into());
    row.insert("wind_kph".into(), "12".into());
    row
}

fn query_for(city: &str) -> String {
    format!("What was the daily high in {city} on {DATE}?")
}

fn suite() -> TaskSuite {
    let daily: Vec<Record> = CITIES
        .iter()
        .enumerate()
        .map(|(i, city)| daily_row(city, 4 + i as i32))
        .collect();
    let stations: Vec<Record> = CITIES
        .iter()
        .enumerate()
        .map(|(i, city)| {
            let mut row = Record::new();
            row.insert("id".into(), format!("st{:02}", i + 1));
            row.insert("city".into(), (*city).into());
            row
        })
        .collect();
    let tasks: Vec<ToolTask> = CITIES
        .iter()
        .map(|city| ToolTask {
            query: query_for(city),
            ground_truth: vec![ActionCall::new(
                "get_daily_high",
                &[("city", city), ("date", DATE)],
            )],
            kb_ref: "daily".into(),
        })
        .collect();
    TaskSuite::Tool(ToolSuite {
        domain: ToolDomain::Weather,
        seed: 0,
        actions: tool_action_space(ToolDomain::Weather),
        kb: KnowledgeBase {
            tables: BTreeMap::from([
                ("daily".to_string(), daily),
                ("stations".to_string(), stations),
            ]),
        },
        tasks,
    })
}

fn seed_principles() -> PrincipleSet {
    let space = tool_action_space(ToolDomain::Weather);
    let mut set = PrincipleSet::seed_from_space(&space);
    set.entries.insert(
        "get_daily_high".into(),
        Principle {
            action: "get_daily_high".into(),
            text: "Cross-check the low temperature before trusting the high. (guideline v0)"
                .into(),
        },
    );
    set.provenance = Provenance::Seed;
    set
}

fn executor_script() -> Vec<ScriptRule> {
    let mut rules = Vec::new();
    for city in CITIES {
        let wrong_under_seed = !RIGHT_UNDER_SEED.contains(&city);
        // Step 2 rules first: once a lookup is in the history, finish.
        rules.push(ScriptRule::regex(
            &format!("(?s)guideline v1.*{city}.*get_daily_high\\["),
            "finish[done]",
        ));
        rules.push(ScriptRule::regex(
            &format!("(?s)guideline v1.*{city}"),
            &format!("get_daily_high[{city}; {DATE}]"),
        ));
        rules.push(ScriptRule::regex(
            &format!("(?s)guideline v0.*{city}.*get_daily_(high|low)\\["),
            "finish[done]",
        ));
        let first_call = if wrong_under_seed {
            format!("get_daily_low[{city}; {DATE}]")
        } else {
            format!("get_daily_high[{city}; {DATE}]")
        };
        rules.push(ScriptRule::regex(
            &format!("(?s)guideline v0.*{city}"),
            &first_call,
        ));
    }
    rules
}

fn reflector_script() -> Vec<ScriptRule> {
    vec![ScriptRule::substring(
        "Trajectory:",
        "The agent keeps reading the low temperature when the task asks for the high. \
         The get_daily_high guideline should say to call get_daily_high directly with \
         the city and date taken from the task.",
    )]
}

fn optimizer_script() -> Vec<ScriptRule> {
    vec![ScriptRule::substring(
        "guideline v0",
        "get_daily_high: Call get_daily_high directly with the city and date from the task; \
         never answer a daily-high question from any other lookup. (guideline v1)",
    )]
}

const RUN_TOML: &str = r#"# Fully scripted self-reflection run: one optimization iteration lifts
# the mean reward on the six tasks from 2/6 to 1.0.
suite = "suite.json"
mode = "pract"
reflector = "self"
rpo = "batch"
batch_size = 6
max_iters = 1
max_steps = 4
workers = 1
seeds = [0]
seed_principles = "seed_principles.json"
output_dir = "out"

[backends.executor]
kind = "scripted"
script_path = "executor_script.json"

[backends.reflector]
kind = "scripted"
script_path = "reflector_script.json"

[backends.optimizer]
kind = "scripted"
script_path = "optimizer_script.json"
"#;

fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    let mut text = serde_json::to_string_pretty(value).expect("serialize");
    text.push('\n');
    std::fs::write(path, text).expect("write");
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/synthetic_improvement");
    std::fs::create_dir_all(&root).expect("create scenario dir");

    save_task_suite(&root.join("suite.json"), &suite()).expect("write suite");
    std::fs::write(
        root.join("seed_principles.json"),
        serialize_principle_set(&seed_principles()),
    )
    .expect("write principles");
    write_json(&root.join("executor_script.json"), &executor_script());
    write_json(&root.join("reflector_script.json"), &reflector_script());
    write_json(&root.join("optimizer_script.json"), &optimizer_script());
    std::fs::write(root.join("run.toml"), RUN_TOML).expect("write run.toml");

    println!("scenario written to {}", root.display());
}

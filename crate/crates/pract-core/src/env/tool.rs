//! Function-call tool environments backed by a synthetic knowledge base.
//!
//! Three domains ship: academia (papers), movie (films) and weather
//! (station daily series). Every lookup is a deterministic scan over the
//! KB tables; misses are "no records found" observations. The episode
//! reward is the recall of the task's ground-truth calls among the
//! executed non-inner calls.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::types::{
    call_identity, normalize_arg, validate_action_space, ActionCall, ActionSpec, Observation,
    ParamSpec, Trajectory,
};

use super::{check_calls_in_space, EnvError, Environment};

/// One KB row: field name to value.
pub type Record = BTreeMap<String, String>;

/// Immutable tables shared by every episode of a suite.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub tables: BTreeMap<String, Vec<Record>>,
}

impl KnowledgeBase {
    pub fn table(&self, name: &str) -> &[Record] {
        self.tables.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Rows of `table` whose `field` equals `value` under argument
    /// normalization.
    pub fn rows_matching<'a>(
        &'a self,
        table: &str,
        field: &'a str,
        value: &'a str,
    ) -> impl Iterator<Item = &'a Record> {
        let wanted = normalize_arg(value);
        self.table(table).iter().filter(move |row| {
            row.get(field)
                .map(|v| normalize_arg(v) == wanted)
                .unwrap_or(false)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolDomain {
    Academia,
    Movie,
    Weather,
}

impl fmt::Display for ToolDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ToolDomain::Academia => "academia",
            ToolDomain::Movie => "movie",
            ToolDomain::Weather => "weather",
        };
        f.write_str(s)
    }
}

/// One tool task: the query, the order-insensitive ground-truth call set
/// and the KB it runs against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolTask {
    pub query: String,
    pub ground_truth: Vec<ActionCall>,
    pub kb_ref: String,
}

/// A full tool suite: domain, action space, KB and tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSuite {
    pub domain: ToolDomain,
    pub seed: u64,
    pub actions: Vec<ActionSpec>,
    pub kb: KnowledgeBase,
    pub tasks: Vec<ToolTask>,
}

impl ToolSuite {
    pub fn validate(&self) -> Result<(), String> {
        validate_action_space(&self.actions)?;
        if self.tasks.is_empty() {
            return Err("suite has no tasks".into());
        }
        for (i, task) in self.tasks.iter().enumerate() {
            if task.ground_truth.is_empty() {
                return Err(format!("task {i} has empty ground truth"));
            }
            check_calls_in_space(&task.ground_truth, &self.actions, &format!("task {i}"))?;
        }
        Ok(())
    }

    pub fn make_env(&self, query: &str) -> Result<Box<dyn Environment>, EnvError> {
        let task = self
            .tasks
            .iter()
            .find(|t| t.query == query)
            .ok_or_else(|| EnvError::UnknownQuery(query.to_string()))?;
        Ok(Box::new(ToolEnv {
            domain: self.domain,
            kb: Arc::new(self.kb.clone()),
            task: task.clone(),
            executed: Vec::new(),
        }))
    }
}

/// Recall of ground-truth actions among the trajectory's executed calls.
/// Call equality is (name, normalized args); duplicates count once.
pub fn tool_reward(trajectory: &Trajectory, task: &ToolTask) -> f64 {
    recall_reward(trajectory.executed_calls(), &task.ground_truth)
}

pub(crate) fn recall_reward<'a>(
    executed: impl Iterator<Item = &'a ActionCall>,
    ground_truth: &[ActionCall],
) -> f64 {
    let executed: BTreeSet<_> = executed.map(call_identity).collect();
    let truth: BTreeSet<_> = ground_truth.iter().map(call_identity).collect();
    if truth.is_empty() {
        return 0.0;
    }
    let hit = truth.iter().filter(|c| executed.contains(*c)).count();
    hit as f64 / truth.len() as f64
}

struct ToolEnv {
    domain: ToolDomain,
    kb: Arc<KnowledgeBase>,
    task: ToolTask,
    executed: Vec<ActionCall>,
}

impl Environment for ToolEnv {
    fn step(&mut self, call: &ActionCall) -> Observation {
        self.executed.push(call.clone());
        Observation::text(tool_lookup(self.domain, &self.kb, call))
    }

    fn is_terminal(&self) -> bool {
        false
    }

    fn final_reward(&self) -> Option<f64> {
        Some(recall_reward(self.executed.iter(), &self.task.ground_truth))
    }
}

const NO_RECORDS: &str = "no records found";

fn arg<'a>(call: &'a ActionCall, name: &str) -> &'a str {
    call.args.get(name).map(String::as_str).unwrap_or("")
}

fn listing(items: Vec<String>) -> String {
    if items.is_empty() {
        NO_RECORDS.to_string()
    } else {
        items.join("; ")
    }
}

/// Deterministic KB lookup for one call, rendered as observation text.
pub fn tool_lookup(domain: ToolDomain, kb: &KnowledgeBase, call: &ActionCall) -> String {
    match domain {
        ToolDomain::Academia => academia_lookup(kb, call),
        ToolDomain::Movie => movie_lookup(kb, call),
        ToolDomain::Weather => weather_lookup(kb, call),
    }
}

fn author_matches(row: &Record, author: &str) -> bool {
    let wanted = normalize_arg(author);
    row.get("authors")
        .map(|a| a.split(';').any(|name| normalize_arg(name) == wanted))
        .unwrap_or(false)
}

fn academia_lookup(kb: &KnowledgeBase, call: &ActionCall) -> String {
    match call.action.as_str() {
        "search_papers_by_author" => {
            let author = arg(call, "author");
            let titles: Vec<String> = kb
                .table("papers")
                .iter()
                .filter(|row| author_matches(row, author))
                .filter_map(|row| row.get("title").cloned())
                .collect();
            listing(titles)
        }
        "get_paper_venue" => {
            let rows: Vec<String> = kb
                .rows_matching("papers", "title", arg(call, "title"))
                .filter_map(|row| row.get("venue").cloned())
                .collect();
            listing(rows)
        }
        "get_paper_year" => {
            let rows: Vec<String> = kb
                .rows_matching("papers", "title", arg(call, "title"))
                .filter_map(|row| row.get("year").cloned())
                .collect();
            listing(rows)
        }
        "get_coauthors" => {
            let author = arg(call, "author");
            let wanted = normalize_arg(author);
            let mut coauthors = BTreeSet::new();
            for row in kb.table("papers") {
                if author_matches(row, author) {
                    if let Some(authors) = row.get("authors") {
                        for name in authors.split(';') {
                            let name = name.trim();
                            if normalize_arg(name) != wanted {
                                coauthors.insert(name.to_string());
                            }
                        }
                    }
                }
            }
            listing(coauthors.into_iter().collect())
        }
        "count_papers" => {
            let author = arg(call, "author");
            let n = kb
                .table("papers")
                .iter()
                .filter(|row| author_matches(row, author))
                .count();
            if n == 0 {
                NO_RECORDS.to_string()
            } else {
                format!("{n} paper(s)")
            }
        }
        _ => NO_RECORDS.to_string(),
    }
}

fn movie_lookup(kb: &KnowledgeBase, call: &ActionCall) -> String {
    let by_title = |field: &str| -> String {
        let rows: Vec<String> = kb
            .rows_matching("movies", "title", arg(call, "title"))
            .filter_map(|row| row.get(field).cloned())
            .collect();
        listing(rows)
    };
    match call.action.as_str() {
        "get_movie_rating" => by_title("rating"),
        "get_movie_director" => by_title("director"),
        "get_movie_year" => by_title("year"),
        "get_cast" => {
            let rows: Vec<String> = kb
                .rows_matching("movies", "title", arg(call, "title"))
                .filter_map(|row| row.get("cast").cloned())
                .map(|cast| cast.split(';').map(str::trim).collect::<Vec<_>>().join("; "))
                .collect();
            listing(rows)
        }
        "find_movies_by_actor" => {
            let wanted = normalize_arg(arg(call, "actor"));
            let titles: Vec<String> = kb
                .table("movies")
                .iter()
                .filter(|row| {
                    row.get("cast")
                        .map(|c| c.split(';').any(|a| normalize_arg(a) == wanted))
                        .unwrap_or(false)
                })
                .filter_map(|row| row.get("title").cloned())
                .collect();
            listing(titles)
        }
        _ => NO_RECORDS.to_string(),
    }
}

fn weather_lookup(kb: &KnowledgeBase, call: &ActionCall) -> String {
    let daily_field = |field: &str| -> String {
        let city = normalize_arg(arg(call, "city"));
        let date = normalize_arg(arg(call, "date"));
        let rows: Vec<String> = kb
            .table("daily")
            .iter()
            .filter(|row| {
                row.get("city").map(|c| normalize_arg(c) == city).unwrap_or(false)
                    && row.get("date").map(|d| normalize_arg(d) == date).unwrap_or(false)
            })
            .filter_map(|row| row.get(field).cloned())
            .collect();
        listing(rows)
    };
    match call.action.as_str() {
        "get_daily_high" => daily_field("high_c"),
        "get_daily_low" => daily_field("low_c"),
        "get_precipitation" => daily_field("precip_mm"),
        "get_wind_speed" => daily_field("wind_kph"),
        "list_stations" => {
            let cities: Vec<String> = kb
                .table("stations")
                .iter()
                .filter_map(|row| row.get("city").cloned())
                .collect();
            listing(cities)
        }
        _ => NO_RECORDS.to_string(),
    }
}

/// Action space for a tool domain, including `think` and `finish`.
pub fn tool_action_space(domain: ToolDomain) -> Vec<ActionSpec> {
    let mut actions = match domain {
        ToolDomain::Academia => vec![
            ActionSpec::new(
                "search_papers_by_author",
                "List the titles of every paper written by the given author.",
                vec![ParamSpec::string("author")],
            ),
            ActionSpec::new(
                "get_paper_venue",
                "Look up the venue that published the given paper title.",
                vec![ParamSpec::string("title")],
            ),
            ActionSpec::new(
                "get_paper_year",
                "Look up the publication year of the given paper title.",
                vec![ParamSpec::string("title")],
            ),
            ActionSpec::new(
                "get_coauthors",
                "List everyone who has coauthored a paper with the given author.",
                vec![ParamSpec::string("author")],
            ),
            ActionSpec::new(
                "count_papers",
                "Count how many papers the given author has written.",
                vec![ParamSpec::string("author")],
            ),
        ],
        ToolDomain::Movie => vec![
            ActionSpec::new(
                "get_movie_rating",
                "Look up the rating of the given movie title.",
                vec![ParamSpec::string("title")],
            ),
            ActionSpec::new(
                "get_movie_director",
                "Look up the director of the given movie title.",
                vec![ParamSpec::string("title")],
            ),
            ActionSpec::new(
                "get_movie_year",
                "Look up the release year of the given movie title.",
                vec![ParamSpec::string("title")],
            ),
            ActionSpec::new(
                "get_cast",
                "List the cast of the given movie title.",
                vec![ParamSpec::string("title")],
            ),
            ActionSpec::new(
                "find_movies_by_actor",
                "List the movies featuring the given actor.",
                vec![ParamSpec::string("actor")],
            ),
        ],
        ToolDomain::Weather => vec![
            ActionSpec::new(
                "get_daily_high",
                "Look up the daily high temperature (Celsius) for a city and date.",
                vec![ParamSpec::string("city"), ParamSpec::string("date")],
            ),
            ActionSpec::new(
                "get_daily_low",
                "Look up the daily low temperature (Celsius) for a city and date.",
                vec![ParamSpec::string("city"), ParamSpec::string("date")],
            ),
            ActionSpec::new(
                "get_precipitation",
                "Look up the precipitation (millimeters) for a city and date.",
                vec![ParamSpec::string("city"), ParamSpec::string("date")],
            ),
            ActionSpec::new(
                "get_wind_speed",
                "Look up the wind speed (km/h) for a city and date.",
                vec![ParamSpec::string("city"), ParamSpec::string("date")],
            ),
            ActionSpec::new("list_stations", "List every weather station city.", vec![]),
        ],
    };
    actions.push(ActionSpec::think());
    actions.push(ActionSpec::finish());
    actions
}

//! Miniature shopping environment with search and click actions.
//!
//! Search ranks catalog items by token overlap between the query and the
//! item's searchable text (title, attributes and option values), ties
//! broken by item id ascending, top 5 shown. Clicking an item opens its
//! detail page, clicking `name: value` selects an option, clicking
//! `buy now` ends the episode. The reward is the fraction of the goal's
//! required attributes satisfied by the purchased item's attributes and
//! selected options, with a price ceiling counting as one attribute.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::types::{
    normalize_arg, validate_action_space, ActionCall, ActionSpec, Observation, ParamSpec,
};

use super::{EnvError, Environment};

/// Number of results shown per search.
pub const SEARCH_TOP_K: usize = 5;

const BUY_TARGET: &str = "buy now";
const NOTHING_HAPPENED: &str = "Nothing happened.";

/// One catalog item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopItem {
    pub id: String,
    pub title: String,
    pub attributes: BTreeMap<String, String>,
    pub options: BTreeMap<String, Vec<String>>,
    pub price: f64,
}

/// What a shopping task requires of the purchased item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopGoal {
    pub required_attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_ceiling: Option<f64>,
    pub query_hint: String,
}

/// A full shopping suite: action space, catalog and goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopSuite {
    pub seed: u64,
    pub actions: Vec<ActionSpec>,
    pub catalog: Vec<ShopItem>,
    pub tasks: Vec<ShopGoal>,
}

impl ShopSuite {
    pub fn validate(&self) -> Result<(), String> {
        validate_action_space(&self.actions)?;
        if self.tasks.is_empty() {
            return Err("suite has no tasks".into());
        }
        let mut ids = BTreeSet::new();
        for item in &self.catalog {
            if !ids.insert(&item.id) {
                return Err(format!("duplicate item id {}", item.id));
            }
            for (name, values) in &item.options {
                if values.is_empty() {
                    return Err(format!("item {} option {name} has no values", item.id));
                }
            }
        }
        for (i, goal) in self.tasks.iter().enumerate() {
            if goal.required_attributes.is_empty() && goal.price_ceiling.is_none() {
                return Err(format!("task {i} requires no attributes"));
            }
        }
        Ok(())
    }

    pub fn make_env(&self, query: &str) -> Result<Box<dyn Environment>, EnvError> {
        let goal = self
            .tasks
            .iter()
            .find(|t| t.query_hint == query)
            .ok_or_else(|| EnvError::UnknownQuery(query.to_string()))?;
        Ok(Box::new(ShopEnv {
            catalog: self.catalog.clone(),
            goal: goal.clone(),
            page: Page::Search,
            purchase: None,
        }))
    }
}

/// Coverage of the goal's requirements by a purchase; `None` purchase
/// scores 0.
pub fn shop_reward(
    purchase: Option<(&ShopItem, &BTreeMap<String, String>)>,
    goal: &ShopGoal,
) -> f64 {
    let total = goal.required_attributes.len() + usize::from(goal.price_ceiling.is_some());
    if total == 0 {
        return 0.0;
    }
    let Some((item, selected)) = purchase else {
        return 0.0;
    };
    let mut satisfied = 0usize;
    for (name, value) in &goal.required_attributes {
        let wanted = normalize_arg(value);
        let from_attrs = item
            .attributes
            .get(name)
            .map(|v| normalize_arg(v) == wanted)
            .unwrap_or(false);
        let from_options = selected
            .get(name)
            .map(|v| normalize_arg(v) == wanted)
            .unwrap_or(false);
        if from_attrs || from_options {
            satisfied += 1;
        }
    }
    if let Some(ceiling) = goal.price_ceiling {
        if item.price <= ceiling {
            satisfied += 1;
        }
    }
    satisfied as f64 / total as f64
}

/// Lowercase alphanumeric tokens of a text.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn searchable_text(item: &ShopItem) -> String {
    let mut parts = vec![item.title.clone()];
    parts.extend(item.attributes.values().cloned());
    for values in item.options.values() {
        parts.extend(values.iter().cloned());
    }
    parts.join(" ")
}

/// Token-overlap score between a query and an item.
pub fn overlap_score(query: &str, item: &ShopItem) -> usize {
    let query_tokens = tokenize(query);
    let item_tokens = tokenize(&searchable_text(item));
    query_tokens.intersection(&item_tokens).count()
}

/// Ranks the catalog for a query: positive-score items by (score desc,
/// id asc), truncated to the top k.
pub fn rank_catalog<'a>(catalog: &'a [ShopItem], query: &str, k: usize) -> Vec<&'a ShopItem> {
    let mut scored: Vec<(usize, &ShopItem)> = catalog
        .iter()
        .map(|item| (overlap_score(query, item), item))
        .filter(|(score, _)| *score > 0)
        .collect();
    scored.sort_by(|(sa, ia), (sb, ib)| sb.cmp(sa).then_with(|| ia.id.cmp(&ib.id)));
    scored.into_iter().take(k).map(|(_, item)| item).collect()
}

enum Page {
    Search,
    Results(Vec<String>),
    Detail {
        item_id: String,
        selected: BTreeMap<String, String>,
    },
}

struct ShopEnv {
    catalog: Vec<ShopItem>,
    goal: ShopGoal,
    page: Page,
    purchase: Option<(ShopItem, BTreeMap<String, String>)>,
}

impl ShopEnv {
    fn item(&self, id: &str) -> Option<&ShopItem> {
        self.catalog.iter().find(|i| i.id == id)
    }

    fn render_results(&self, ids: &[String]) -> String {
        if ids.is_empty() {
            return "no results".to_string();
        }
        let mut lines = vec!["Results:".to_string()];
        for (i, id) in ids.iter().enumerate() {
            if let Some(item) = self.item(id) {
                let attrs = item
                    .attributes
                    .iter()
                    .map(|(k, v)| format!("{k}: {v}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                lines.push(format!(
                    "[{}] {} | {} | {} | price ${:.2}",
                    i + 1,
                    item.id,
                    item.title,
                    attrs,
                    item.price
                ));
            }
        }
        lines.push("Click an item as `click[item N]`.".to_string());
        lines.join("\n")
    }

    fn render_detail(&self, item: &ShopItem, selected: &BTreeMap<String, String>) -> String {
        let mut lines = vec![
            format!("{} | {}", item.id, item.title),
            format!("price: ${:.2}", item.price),
        ];
        let attrs = item
            .attributes
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join("; ");
        lines.push(format!("attributes: {attrs}"));
        lines.push("options:".to_string());
        for (name, values) in &item.options {
            lines.push(format!("  {name}: {}", values.join(" | ")));
        }
        if !selected.is_empty() {
            let sel = selected
                .iter()
                .map(|(k, v)| format!("{k}: {v}"))
                .collect::<Vec<_>>()
                .join("; ");
            lines.push(format!("selected: {sel}"));
        }
        lines.push(
            "Click an option as `click[name: value]`, then `click[buy now]` to purchase."
                .to_string(),
        );
        lines.join("\n")
    }

    fn search(&mut self, query: &str) -> Observation {
        let ranked = rank_catalog(&self.catalog, query, SEARCH_TOP_K);
        let ids: Vec<String> = ranked.iter().map(|i| i.id.clone()).collect();
        let obs = self.render_results(&ids);
        self.page = Page::Results(ids);
        Observation::text(obs)
    }

    fn click(&mut self, target: &str) -> Observation {
        let target_norm = normalize_arg(target);
        // Buy control, only on a detail page.
        if target_norm == BUY_TARGET {
            if let Page::Detail { item_id, selected } = &self.page {
                if let Some(item) = self.item(item_id).cloned() {
                    let summary = format!(
                        "You bought {} ({}) for ${:.2}.",
                        item.id, item.title, item.price
                    );
                    self.purchase = Some((item, selected.clone()));
                    return Observation::text(summary);
                }
            }
            return Observation::text(NOTHING_HAPPENED);
        }

        // Option selection: `name: value` on a detail page.
        if let Page::Detail { item_id, selected } = &mut self.page {
            if let Some((name, value)) = target.split_once(':') {
                let name = name.trim().to_string();
                let value = value.trim().to_string();
                let valid = self
                    .catalog
                    .iter()
                    .find(|i| &i.id == item_id)
                    .and_then(|i| i.options.get(&name))
                    .map(|values| values.iter().any(|v| normalize_arg(v) == normalize_arg(&value)))
                    .unwrap_or(false);
                if valid {
                    selected.insert(name.clone(), value.clone());
                    return Observation::text(format!("You have selected {name}: {value}."));
                }
                return Observation::text(NOTHING_HAPPENED);
            }
        }

        // Item navigation: `item N` from the last results, or a bare id.
        let clicked_id: Option<String> = match &self.page {
            Page::Results(ids) => {
                if let Some(n) = target_norm
                    .strip_prefix("item ")
                    .and_then(|n| n.trim().parse::<usize>().ok())
                {
                    ids.get(n.saturating_sub(1)).cloned()
                } else {
                    ids.iter().find(|id| normalize_arg(id) == target_norm).cloned()
                }
            }
            _ => None,
        };
        if let Some(id) = clicked_id {
            if let Some(item) = self.item(&id) {
                let obs = self.render_detail(item, &BTreeMap::new());
                self.page = Page::Detail {
                    item_id: id,
                    selected: BTreeMap::new(),
                };
                return Observation::text(obs);
            }
        }
        Observation::text(NOTHING_HAPPENED)
    }
}

impl Environment for ShopEnv {
    fn step(&mut self, call: &ActionCall) -> Observation {
        match call.action.as_str() {
            "search" => {
                let query = call.args.get("query").cloned().unwrap_or_default();
                self.search(&query)
            }
            "click" => {
                let target = call.args.get("target").cloned().unwrap_or_default();
                self.click(&target)
            }
            _ => Observation::text(NOTHING_HAPPENED),
        }
    }

    fn is_terminal(&self) -> bool {
        self.purchase.is_some()
    }

    fn final_reward(&self) -> Option<f64> {
        let purchase = self.purchase.as_ref().map(|(i, s)| (i, s));
        Some(shop_reward(purchase, &self.goal))
    }
}

/// Action space of the shopping environment.
pub fn shop_action_space() -> Vec<ActionSpec> {
    vec![
        ActionSpec::new(
            "search",
            "Search the catalog with a free-text query; shows the top matching items.",
            vec![ParamSpec::string("query")],
        ),
        ActionSpec::new(
            "click",
            "Click a visible target: `item N`, an option as `name: value`, or `buy now`.",
            vec![ParamSpec::string("target")],
        ),
        ActionSpec::think(),
        ActionSpec::finish(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, title: &str, attrs: &[(&str, &str)], price: f64) -> ShopItem {
        ShopItem {
            id: id.into(),
            title: title.into(),
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            options: BTreeMap::from([
                ("color".to_string(), vec!["red".to_string(), "blue".to_string()]),
                ("size".to_string(), vec!["m".to_string(), "xl".to_string()]),
            ]),
            price,
        }
    }

    fn suite() -> ShopSuite {
        ShopSuite {
            seed: 0,
            actions: shop_action_space(),
            catalog: vec![
                item("p0001", "red cotton dress", &[("category", "dress"), ("material", "cotton")], 15.0),
                item("p0002", "blue denim jacket", &[("category", "jacket"), ("material", "denim")], 40.0),
                item("p0003", "red wool hat", &[("category", "hat"), ("material", "wool")], 12.0),
            ],
            tasks: vec![ShopGoal {
                required_attributes: BTreeMap::from([
                    ("color".to_string(), "red".to_string()),
                    ("size".to_string(), "xl".to_string()),
                ]),
                price_ceiling: Some(20.0),
                query_hint: "a red dress under $20, size xl".into(),
            }],
        }
    }

    #[test]
    fn unique_title_match_ranks_first() {
        let s = suite();
        let ranked = rank_catalog(&s.catalog, "denim jacket", SEARCH_TOP_K);
        assert_eq!(ranked[0].id, "p0002");
    }

    #[test]
    fn zero_overlap_is_no_results() {
        let s = suite();
        let mut env = s.make_env("a red dress under $20, size xl").unwrap();
        let obs = env.step(&ActionCall::new("search", &[("query", "zzz qqq")]));
        assert_eq!(obs.text, "no results");
    }

    #[test]
    fn ranking_matches_documented_scores() {
        // Oracle: recompute token-overlap scores by hand for each item.
        let s = suite();
        let query = "red dress";
        let mut expected: Vec<(usize, &str)> = s
            .catalog
            .iter()
            .map(|i| {
                let text = format!(
                    "{} {} {}",
                    i.title,
                    i.attributes.values().cloned().collect::<Vec<_>>().join(" "),
                    i.options.values().flatten().cloned().collect::<Vec<_>>().join(" ")
                );
                let q: BTreeSet<&str> = query.split(' ').collect();
                let t: BTreeSet<String> = tokenize(&text).into_iter().collect();
                let score = q.iter().filter(|w| t.contains(**w)).count();
                (score, i.id.as_str())
            })
            .filter(|(s, _)| *s > 0)
            .collect();
        expected.sort_by(|(sa, ia), (sb, ib)| sb.cmp(sa).then(ia.cmp(ib)));
        let got: Vec<&str> = rank_catalog(&s.catalog, query, SEARCH_TOP_K)
            .iter()
            .map(|i| i.id.as_str())
            .collect();
        let expected: Vec<&str> = expected.into_iter().map(|(_, id)| id).collect();
        assert_eq!(got, expected);
        // Both "red" tokens hit p0001 and p0003; "dress" only p0001.
        assert_eq!(got[0], "p0001");
    }

    #[test]
    fn tie_break_is_by_id_ascending() {
        let s = suite();
        // Every test item offers a red color option, so "red" scores 1 for
        // all three and the order falls back to id.
        let ranked = rank_catalog(&s.catalog, "red", SEARCH_TOP_K);
        let ids: Vec<&str> = ranked.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, vec!["p0001", "p0002", "p0003"]);
    }

    #[test]
    fn click_item_then_option_then_buy() {
        let s = suite();
        let mut env = s.make_env("a red dress under $20, size xl").unwrap();
        env.step(&ActionCall::new("search", &[("query", "red dress")]));
        let detail = env.step(&ActionCall::new("click", &[("target", "item 1")]));
        assert!(detail.text.contains("p0001"));
        assert!(detail.text.contains("size: m | xl"));
        let sel = env.step(&ActionCall::new("click", &[("target", "color: red")]));
        assert!(sel.text.contains("selected color: red"));
        assert!(!env.is_terminal());
        let done = env.step(&ActionCall::new("click", &[("target", "buy now")]));
        assert!(done.text.contains("You bought p0001"));
        assert!(env.is_terminal());
    }

    #[test]
    fn invalid_target_is_nothing_happened() {
        let s = suite();
        let mut env = s.make_env("a red dress under $20, size xl").unwrap();
        env.step(&ActionCall::new("search", &[("query", "red dress")]));
        let obs = env.step(&ActionCall::new("click", &[("target", "item 99")]));
        assert_eq!(obs.text, NOTHING_HAPPENED);
    }

    #[test]
    fn coverage_two_of_three() {
        let s = suite();
        let goal = &s.tasks[0];
        // Red $15 item with size m selected: color ok, size wrong, price ok.
        let selected = BTreeMap::from([
            ("color".to_string(), "red".to_string()),
            ("size".to_string(), "m".to_string()),
        ]);
        let r = shop_reward(Some((&s.catalog[0], &selected)), goal);
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_purchase_scores_zero() {
        let s = suite();
        assert_eq!(shop_reward(None, &s.tasks[0]), 0.0);
    }

    #[test]
    fn env_reward_flows_from_purchase() {
        let s = suite();
        let mut env = s.make_env("a red dress under $20, size xl").unwrap();
        env.step(&ActionCall::new("search", &[("query", "red dress")]));
        env.step(&ActionCall::new("click", &[("target", "item 1")]));
        env.step(&ActionCall::new("click", &[("target", "color: red")]));
        env.step(&ActionCall::new("click", &[("target", "size: xl")]));
        env.step(&ActionCall::new("click", &[("target", "buy now")]));
        assert_eq!(env.final_reward(), Some(1.0));
    }

    #[test]
    fn buy_outside_detail_does_nothing() {
        let s = suite();
        let mut env = s.make_env("a red dress under $20, size xl").unwrap();
        let obs = env.step(&ActionCall::new("click", &[("target", "buy now")]));
        assert_eq!(obs.text, NOTHING_HAPPENED);
        assert!(!env.is_terminal());
        assert_eq!(env.final_reward(), Some(0.0));
    }
}

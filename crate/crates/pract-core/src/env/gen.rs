//! Deterministic task-suite generators.
//!
//! Each tool domain gets 60 tasks over a synthetic knowledge base; the
//! shopping environment gets 251 tasks over a synthetic catalog. The same
//! seed always yields a byte-identical suite.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::ActionCall;

use super::shop::{shop_action_space, ShopGoal, ShopItem, ShopSuite};
use super::tool::{tool_action_space, KnowledgeBase, Record, ToolDomain, ToolSuite, ToolTask};
use super::TaskSuite;

/// Tasks per tool domain.
pub const TOOL_TASK_COUNT: usize = 60;

/// Tasks in the shopping suite.
pub const SHOP_TASK_COUNT: usize = 251;

/// Generates the named suite from a seed.
pub fn generate_suite(env_id: &str, seed: u64) -> Option<TaskSuite> {
    match env_id {
        "academia" => Some(TaskSuite::Tool(gen_tool_suite(ToolDomain::Academia, seed))),
        "movie" => Some(TaskSuite::Tool(gen_tool_suite(ToolDomain::Movie, seed))),
        "weather" => Some(TaskSuite::Tool(gen_tool_suite(ToolDomain::Weather, seed))),
        "shop" => Some(TaskSuite::Shop(gen_shop_suite(seed))),
        _ => None,
    }
}

/// Ids accepted by [`generate_suite`].
pub const ENV_IDS: [&str; 4] = ["academia", "movie", "weather", "shop"];

const FIRST_NAMES: [&str; 16] = [
    "Ada", "Ben", "Carla", "Dmitri", "Elena", "Farid", "Grace", "Hugo", "Ines", "Jun", "Kuno",
    "Lena", "Marco", "Nadia", "Omar", "Priya",
];

const LAST_NAMES: [&str; 16] = [
    "Alvarez", "Brandt", "Chen", "Dorsey", "Eriksen", "Fontaine", "Garcia", "Hayashi", "Iqbal",
    "Jensen", "Kovacs", "Lindqvist", "Moreau", "Novak", "Okafor", "Petrov",
];

const VENUES: [&str; 8] = [
    "Journal of Synthetic Data",
    "Annual Systems Symposium",
    "Workshop on Structured Retrieval",
    "Conference on Simulated Agents",
    "Letters in Applied Modeling",
    "Proceedings of Tabular Methods",
    "Review of Computational Tools",
    "Forum on Interactive Software",
];

const TITLE_ADJECTIVES: [&str; 12] = [
    "Sparse", "Robust", "Latent", "Modular", "Adaptive", "Scalable", "Recursive", "Hybrid",
    "Incremental", "Stochastic", "Compositional", "Bounded",
];

const TITLE_NOUNS: [&str; 12] = [
    "Indexing", "Retrieval", "Planning", "Routing", "Caching", "Sampling", "Ranking", "Matching",
    "Scheduling", "Encoding", "Pruning", "Alignment",
];

const TITLE_TOPICS: [&str; 10] = [
    "Tabular Streams",
    "Sparse Graphs",
    "Dialogue Systems",
    "Sensor Networks",
    "Market Data",
    "Program Traces",
    "Web Corpora",
    "Knowledge Tables",
    "Event Logs",
    "Media Archives",
];

const MOVIE_ADJECTIVES: [&str; 10] = [
    "Silent", "Crimson", "Forgotten", "Electric", "Paper", "Winter", "Golden", "Hollow",
    "Midnight", "Glass",
];

const MOVIE_NOUNS: [&str; 12] = [
    "Harbor", "Orchard", "Signal", "Parade", "Compass", "Lantern", "Meridian", "Voyage",
    "Garden", "Circuit", "Horizon", "Archive",
];

const CITIES: [&str; 12] = [
    "Arlow", "Bexley", "Corvan", "Dunmore", "Eastvale", "Fallbrook", "Grenton", "Halvik",
    "Ironport", "Jessfield", "Kelborne", "Lunden",
];

fn person_name(rng: &mut ChaCha8Rng) -> String {
    let first = FIRST_NAMES[rng.gen_range(0..FIRST_NAMES.len())];
    let last = LAST_NAMES[rng.gen_range(0..LAST_NAMES.len())];
    format!("{first} {last}")
}

fn record(fields: &[(&str, String)]) -> Record {
    fields
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn academia_kb(rng: &mut ChaCha8Rng) -> KnowledgeBase {
    let authors: Vec<String> = {
        let mut set = BTreeSet::new();
        while set.len() < 24 {
            set.insert(person_name(rng));
        }
        set.into_iter().collect()
    };
    let mut titles = BTreeSet::new();
    let mut papers = Vec::new();
    while papers.len() < 40 {
        let title = format!(
            "{} {} for {}",
            TITLE_ADJECTIVES[rng.gen_range(0..TITLE_ADJECTIVES.len())],
            TITLE_NOUNS[rng.gen_range(0..TITLE_NOUNS.len())],
            TITLE_TOPICS[rng.gen_range(0..TITLE_TOPICS.len())],
        );
        if !titles.insert(title.clone()) {
            continue;
        }
        let mut pool = authors.clone();
        pool.shuffle(rng);
        let author_count = rng.gen_range(1..=3);
        let paper_authors = pool[..author_count].join("; ");
        papers.push(record(&[
            ("title", title),
            ("authors", paper_authors),
            ("venue", VENUES[rng.gen_range(0..VENUES.len())].to_string()),
            ("year", rng.gen_range(2015..=2024).to_string()),
        ]));
    }
    KnowledgeBase {
        tables: BTreeMap::from([("papers".to_string(), papers)]),
    }
}

fn movie_kb(rng: &mut ChaCha8Rng) -> KnowledgeBase {
    let actors: Vec<String> = {
        let mut set = BTreeSet::new();
        while set.len() < 20 {
            set.insert(person_name(rng));
        }
        set.into_iter().collect()
    };
    let mut titles = BTreeSet::new();
    let mut movies = Vec::new();
    while movies.len() < 36 {
        let title = format!(
            "The {} {}",
            MOVIE_ADJECTIVES[rng.gen_range(0..MOVIE_ADJECTIVES.len())],
            MOVIE_NOUNS[rng.gen_range(0..MOVIE_NOUNS.len())],
        );
        if !titles.insert(title.clone()) {
            continue;
        }
        let mut pool = actors.clone();
        pool.shuffle(rng);
        let cast = pool[..rng.gen_range(2..=4)].join("; ");
        movies.push(record(&[
            ("title", title),
            ("director", person_name(rng)),
            ("year", rng.gen_range(1985..=2024).to_string()),
            ("rating", format!("{:.1}", rng.gen_range(40..=95) as f64 / 10.0)),
            ("cast", cast),
        ]));
    }
    KnowledgeBase {
        tables: BTreeMap::from([("movies".to_string(), movies)]),
    }
}

fn weather_kb(rng: &mut ChaCha8Rng) -> KnowledgeBase {
    let stations: Vec<Record> = CITIES
        .iter()
        .enumerate()
        .map(|(i, city)| record(&[("id", format!("st{:02}", i + 1)), ("city", city.to_string())]))
        .collect();
    let mut daily = Vec::new();
    for city in CITIES {
        for day in 1..=20 {
            let low = rng.gen_range(-8..=12);
            let high = low + rng.gen_range(2..=14);
            daily.push(record(&[
                ("city", city.to_string()),
                ("date", format!("2024-01-{day:02}")),
                ("high_c", high.to_string()),
                ("low_c", low.to_string()),
                ("precip_mm", rng.gen_range(0..=30).to_string()),
                ("wind_kph", rng.gen_range(2..=60).to_string()),
            ]));
        }
    }
    KnowledgeBase {
        tables: BTreeMap::from([
            ("stations".to_string(), stations),
            ("daily".to_string(), daily),
        ]),
    }
}

fn academia_task(rng: &mut ChaCha8Rng, kb: &KnowledgeBase) -> ToolTask {
    let papers = kb.table("papers");
    let template = rng.gen_range(0..5);
    let paper = if template == 3 {
        // Coauthor questions need an author who actually has coauthors.
        let multi: Vec<&Record> = papers
            .iter()
            .filter(|p| p["authors"].contains(';'))
            .collect();
        multi[rng.gen_range(0..multi.len())]
    } else {
        &papers[rng.gen_range(0..papers.len())]
    };
    let title = paper["title"].clone();
    let author = paper["authors"]
        .split(';')
        .next()
        .unwrap()
        .trim()
        .to_string();
    let (query, ground_truth) = match template {
        0 => (
            format!("What venue published the paper '{title}'?"),
            vec![ActionCall::new("get_paper_venue", &[("title", &title)])],
        ),
        1 => (
            format!("Find the venue and year of the paper '{title}'."),
            vec![
                ActionCall::new("get_paper_venue", &[("title", &title)]),
                ActionCall::new("get_paper_year", &[("title", &title)]),
            ],
        ),
        2 => (
            format!("List the papers written by {author}."),
            vec![ActionCall::new(
                "search_papers_by_author",
                &[("author", &author)],
            )],
        ),
        3 => (
            format!("Which papers did {author} write, and who are their coauthors?"),
            vec![
                ActionCall::new("search_papers_by_author", &[("author", &author)]),
                ActionCall::new("get_coauthors", &[("author", &author)]),
            ],
        ),
        _ => (
            format!("How many papers did {author} publish, and list their titles."),
            vec![
                ActionCall::new("count_papers", &[("author", &author)]),
                ActionCall::new("search_papers_by_author", &[("author", &author)]),
            ],
        ),
    };
    ToolTask {
        query,
        ground_truth,
        kb_ref: "papers".into(),
    }
}

fn movie_task(rng: &mut ChaCha8Rng, kb: &KnowledgeBase) -> ToolTask {
    let movies = kb.table("movies");
    let movie = &movies[rng.gen_range(0..movies.len())];
    let title = movie["title"].clone();
    let actor = movie["cast"].split(';').next().unwrap().trim().to_string();
    let (query, ground_truth) = match rng.gen_range(0..5) {
        0 => (
            format!("What rating did '{title}' receive?"),
            vec![ActionCall::new("get_movie_rating", &[("title", &title)])],
        ),
        1 => (
            format!("Who directed '{title}' and what year was it released?"),
            vec![
                ActionCall::new("get_movie_director", &[("title", &title)]),
                ActionCall::new("get_movie_year", &[("title", &title)]),
            ],
        ),
        2 => (
            format!("List the cast of '{title}'."),
            vec![ActionCall::new("get_cast", &[("title", &title)])],
        ),
        3 => (
            format!("Which movies feature {actor}?"),
            vec![ActionCall::new("find_movies_by_actor", &[("actor", &actor)])],
        ),
        _ => (
            format!("Find the rating and cast of '{title}'."),
            vec![
                ActionCall::new("get_movie_rating", &[("title", &title)]),
                ActionCall::new("get_cast", &[("title", &title)]),
            ],
        ),
    };
    ToolTask {
        query,
        ground_truth,
        kb_ref: "movies".into(),
    }
}

fn weather_task(rng: &mut ChaCha8Rng, _kb: &KnowledgeBase) -> ToolTask {
    let city = CITIES[rng.gen_range(0..CITIES.len())];
    let date = format!("2024-01-{:02}", rng.gen_range(1..=20));
    let (query, ground_truth) = match rng.gen_range(0..4) {
        0 => (
            format!("What was the daily high in {city} on {date}?"),
            vec![ActionCall::new(
                "get_daily_high",
                &[("city", city), ("date", &date)],
            )],
        ),
        1 => (
            format!("Report the high and low temperatures in {city} on {date}."),
            vec![
                ActionCall::new("get_daily_high", &[("city", city), ("date", &date)]),
                ActionCall::new("get_daily_low", &[("city", city), ("date", &date)]),
            ],
        ),
        2 => (
            format!("How much rain fell in {city} on {date}, and how windy was it?"),
            vec![
                ActionCall::new("get_precipitation", &[("city", city), ("date", &date)]),
                ActionCall::new("get_wind_speed", &[("city", city), ("date", &date)]),
            ],
        ),
        _ => (
            format!("Which stations report weather, and what was the high in {city} on {date}?"),
            vec![
                ActionCall::new("list_stations", &[]),
                ActionCall::new("get_daily_high", &[("city", city), ("date", &date)]),
            ],
        ),
    };
    ToolTask {
        query,
        ground_truth,
        kb_ref: "daily".into(),
    }
}

/// Generates one tool-domain suite with [`TOOL_TASK_COUNT`] tasks.
pub fn gen_tool_suite(domain: ToolDomain, seed: u64) -> ToolSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain_salt(domain));
    let kb = match domain {
        ToolDomain::Academia => academia_kb(&mut rng),
        ToolDomain::Movie => movie_kb(&mut rng),
        ToolDomain::Weather => weather_kb(&mut rng),
    };
    let mut tasks = Vec::with_capacity(TOOL_TASK_COUNT);
    let mut seen = BTreeSet::new();
    while tasks.len() < TOOL_TASK_COUNT {
        let task = match domain {
            ToolDomain::Academia => academia_task(&mut rng, &kb),
            ToolDomain::Movie => movie_task(&mut rng, &kb),
            ToolDomain::Weather => weather_task(&mut rng, &kb),
        };
        if seen.insert(task.query.clone()) {
            tasks.push(task);
        }
    }
    ToolSuite {
        domain,
        seed,
        actions: tool_action_space(domain),
        kb,
        tasks,
    }
}

fn domain_salt(domain: ToolDomain) -> u64 {
    match domain {
        ToolDomain::Academia => 0x61,
        ToolDomain::Movie => 0x6d,
        ToolDomain::Weather => 0x77,
    }
}

const SHOP_CATEGORIES: [&str; 8] = [
    "dress", "jacket", "hat", "shirt", "skirt", "sweater", "scarf", "boots",
];

const SHOP_COLORS: [&str; 8] = [
    "red", "blue", "green", "black", "white", "yellow", "navy", "beige",
];

const SHOP_MATERIALS: [&str; 6] = ["cotton", "wool", "denim", "linen", "leather", "silk"];

const SHOP_BRANDS: [&str; 6] = ["acme", "borealis", "cervo", "dalia", "ekko", "fjord"];

const SHOP_SIZES: [&str; 5] = ["xs", "s", "m", "l", "xl"];

/// Generates the shopping suite with [`SHOP_TASK_COUNT`] tasks.
pub fn gen_shop_suite(seed: u64) -> ShopSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x73);
    let mut catalog = Vec::new();
    for i in 0..90 {
        let category = SHOP_CATEGORIES[rng.gen_range(0..SHOP_CATEGORIES.len())];
        let material = SHOP_MATERIALS[rng.gen_range(0..SHOP_MATERIALS.len())];
        let brand = SHOP_BRANDS[rng.gen_range(0..SHOP_BRANDS.len())];
        let color_count = rng.gen_range(2..=3);
        let mut colors: Vec<String> = SHOP_COLORS
            .choose_multiple(&mut rng, color_count)
            .map(|c| c.to_string())
            .collect();
        colors.sort();
        let size_count = rng.gen_range(2..=4);
        let start = rng.gen_range(0..=SHOP_SIZES.len() - size_count);
        let sizes: Vec<String> = SHOP_SIZES[start..start + size_count]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let price = rng.gen_range(8..=120) as f64 + 0.5;
        catalog.push(ShopItem {
            id: format!("p{i:04}"),
            title: format!("{} {material} {category} by {brand}", colors[0]),
            attributes: BTreeMap::from([
                ("category".to_string(), category.to_string()),
                ("material".to_string(), material.to_string()),
                ("brand".to_string(), brand.to_string()),
            ]),
            options: BTreeMap::from([
                ("color".to_string(), colors),
                ("size".to_string(), sizes),
            ]),
            price,
        });
    }

    let mut tasks = Vec::with_capacity(SHOP_TASK_COUNT);
    for _ in 0..SHOP_TASK_COUNT {
        let item = &catalog[rng.gen_range(0..catalog.len())];
        let color = item.options["color"][rng.gen_range(0..item.options["color"].len())].clone();
        let size = item.options["size"][rng.gen_range(0..item.options["size"].len())].clone();
        let mut required = BTreeMap::from([
            ("category".to_string(), item.attributes["category"].clone()),
            ("color".to_string(), color.clone()),
        ]);
        let mut hint_parts = vec![format!("a {color} {}", item.attributes["category"])];
        if rng.gen_bool(0.5) {
            required.insert("material".to_string(), item.attributes["material"].clone());
            hint_parts.push(format!("made of {}", item.attributes["material"]));
        }
        if rng.gen_bool(0.6) {
            required.insert("size".to_string(), size.clone());
            hint_parts.push(format!("in size {size}"));
        }
        let price_ceiling = if rng.gen_bool(0.5) {
            let ceiling = (item.price + rng.gen_range(1..=20) as f64).ceil();
            hint_parts.push(format!("under ${ceiling:.0}"));
            Some(ceiling)
        } else {
            None
        };
        // A serial suffix keeps query hints unique across the suite.
        let query_hint = format!("{} (order #{:03})", hint_parts.join(", "), tasks.len() + 1);
        tasks.push(ShopGoal {
            required_attributes: required,
            price_ceiling,
            query_hint,
        });
    }

    ShopSuite {
        seed,
        actions: shop_action_space(),
        catalog,
        tasks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{load_task_suite, save_task_suite};

    #[test]
    fn tool_suites_have_sixty_tasks() {
        for domain in [ToolDomain::Academia, ToolDomain::Movie, ToolDomain::Weather] {
            let suite = gen_tool_suite(domain, 7);
            assert_eq!(suite.tasks.len(), TOOL_TASK_COUNT);
            suite.validate().unwrap();
        }
    }

    #[test]
    fn shop_suite_has_251_tasks() {
        let suite = gen_shop_suite(7);
        assert_eq!(suite.tasks.len(), SHOP_TASK_COUNT);
        suite.validate().unwrap();
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        save_task_suite(&a, &generate_suite("academia", 7).unwrap()).unwrap();
        save_task_suite(&b, &generate_suite("academia", 7).unwrap()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let loaded = load_task_suite(&a).unwrap();
        assert_eq!(loaded.len(), TOOL_TASK_COUNT);
    }

    #[test]
    fn different_seeds_differ() {
        let a = gen_shop_suite(1);
        let b = gen_shop_suite(2);
        assert_ne!(a, b);
    }

    #[test]
    fn ground_truth_queries_are_answerable() {
        // Every academia ground-truth lookup hits at least one KB row.
        let suite = gen_tool_suite(ToolDomain::Academia, 3);
        for task in &suite.tasks {
            for call in &task.ground_truth {
                let obs = super::super::tool::tool_lookup(ToolDomain::Academia, &suite.kb, call);
                assert_ne!(obs, "no records found", "unanswerable: {}", task.query);
            }
        }
    }

    #[test]
    fn shop_goals_are_satisfiable() {
        // Each goal was derived from a concrete item; that item must cover it.
        let suite = gen_shop_suite(5);
        for goal in &suite.tasks {
            let satisfiable = suite.catalog.iter().any(|item| {
                let selected: BTreeMap<String, String> = item
                    .options
                    .iter()
                    .filter_map(|(name, values)| {
                        goal.required_attributes
                            .get(name)
                            .filter(|want| values.contains(want))
                            .map(|want| (name.clone(), want.clone()))
                    })
                    .collect();
                crate::env::shop::shop_reward(Some((item, &selected)), goal) == 1.0
            });
            assert!(satisfiable, "unsatisfiable goal: {}", goal.query_hint);
        }
    }
}

//! Synthetic catalogs and session logs for desk-scale experiments, plus a
//! small calibration log whose conditional frequencies are known exactly.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::UserAction;
use crate::env::{EnvConfig, SearchEnv};
use crate::error::Result;
use crate::search::{Asset, AssetType, Catalog};
use crate::usersim::{sessions_to_sequences, CompliancePolicy, ConditionalTable, HistoryKey, SessionLogRow};

/// Tag vocabularies; every asset draws most of its tags from one theme.
pub const THEMES: [&[&str]; 8] = [
    &["car", "sporty", "city", "racing", "expensive", "vintage", "electric", "night", "road", "red"],
    &["nature", "mountain", "lake", "forest", "sunset", "snow", "river", "trail", "autumn", "mist"],
    &["food", "pizza", "salad", "coffee", "dessert", "breakfast", "kitchen", "fruit", "bakery", "wine"],
    &["tech", "cpu", "laptop", "phone", "server", "circuit", "keyboard", "monitor", "robot", "chip"],
    &["animal", "dog", "cat", "bird", "horse", "wildlife", "puppy", "kitten", "zoo", "farm"],
    &["business", "office", "meeting", "team", "handshake", "desk", "chart", "startup", "laptop", "suit"],
    &["travel", "beach", "airport", "hotel", "island", "map", "luggage", "tropical", "cruise", "sunset"],
    &["sport", "football", "tennis", "running", "gym", "yoga", "cycling", "stadium", "swimming", "fitness"],
];

const GENERIC: [&str; 6] = ["background", "closeup", "aerial", "portrait", "colorful", "minimal"];

/// `n` assets with 2–5 theme tags each and an occasional generic tag.
pub fn synthetic_catalog(n: usize, seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assets = (0..n).map(|i| {
        let theme = THEMES[rng.random_range(0..THEMES.len())];
        let mut tags: BTreeSet<&str> = BTreeSet::new();
        tags.insert(theme[0]);
        let k = rng.random_range(1..=4);
        while tags.len() < k + 1 {
            tags.insert(theme[rng.random_range(1..theme.len())]);
        }
        if rng.random_bool(0.3) {
            tags.insert(GENERIC[rng.random_range(0..GENERIC.len())]);
        }
        let mut asset = Asset::new(format!("asset-{i:04}"), tags);
        asset.asset_type = if rng.random_bool(0.25) { AssetType::Video } else { AssetType::Image };
        asset.premium = rng.random_bool(0.2);
        asset
    });
    Catalog::load(assets).expect("ids are unique and tags non-empty")
}

/// First-order transition probabilities of the log generator over
/// `[NewQuery, RefineQuery, RequestMore, ClickResult, AddToCart,
/// ClusterCategoryClick, SearchSimilar, DownloadOrPurchase, end]`.
const LOG_TRANSITIONS: [[f64; 9]; 8] = [
    [0.03, 0.22, 0.15, 0.32, 0.03, 0.10, 0.04, 0.01, 0.10],
    [0.03, 0.12, 0.14, 0.38, 0.04, 0.08, 0.05, 0.01, 0.15],
    [0.05, 0.14, 0.14, 0.35, 0.03, 0.05, 0.04, 0.01, 0.19],
    [0.05, 0.09, 0.08, 0.20, 0.20, 0.03, 0.12, 0.04, 0.19],
    [0.05, 0.08, 0.03, 0.14, 0.06, 0.02, 0.05, 0.32, 0.25],
    [0.03, 0.14, 0.10, 0.40, 0.04, 0.04, 0.05, 0.01, 0.19],
    [0.03, 0.08, 0.10, 0.42, 0.12, 0.02, 0.06, 0.02, 0.15],
    [0.16, 0.03, 0.02, 0.14, 0.06, 0.01, 0.04, 0.04, 0.50],
];

fn theme_of(rng: &mut ChaCha8Rng, avoid: &BTreeSet<usize>) -> usize {
    loop {
        let t = rng.random_range(0..THEMES.len());
        if !avoid.contains(&t) || avoid.len() >= THEMES.len() {
            return t;
        }
    }
}

/// Session logs from a first-order model over user actions. Queries are
/// rendered so that [`crate::usersim::map_log_row`] recovers the intended
/// action: new queries use an unused theme, refinements extend the current
/// query and paging repeats it with a larger offset.
pub fn synthetic_logs(sessions: usize, seed: u64) -> Vec<SessionLogRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut ts: i64 = 1_700_000_000_000;
    for s in 0..sessions {
        let id = format!("s{s:05}");
        let mut used = BTreeSet::new();
        let mut theme = theme_of(&mut rng, &used);
        used.insert(theme);
        let mut query: Vec<&str> = vec![THEMES[theme][0]];
        let mut offset = 0u32;
        let mut push = |rows: &mut Vec<SessionLogRow>, query: &[&str], offset: u32, interaction: &str| {
            ts += 1_000;
            rows.push(SessionLogRow {
                session_id: id.clone(),
                ts,
                query: query.join(" "),
                content_type: None,
                offset,
                interaction: interaction.to_string(),
            });
        };
        push(&mut rows, &query, 0, "search");
        let mut last = 0usize;
        for _ in 0..40 {
            let next = WeightedIndex::new(LOG_TRANSITIONS[last]).expect("positive weights").sample(&mut rng);
            if next == 8 {
                break;
            }
            match next {
                0 => {
                    theme = theme_of(&mut rng, &used);
                    used.insert(theme);
                    query = vec![THEMES[theme][0]];
                    offset = 0;
                    push(&mut rows, &query, offset, "search");
                }
                1 => {
                    let extra = THEMES[theme][1..].choose(&mut rng).copied().unwrap_or("more");
                    if !query.contains(&extra) {
                        query.push(extra);
                    } else if query.len() > 1 {
                        query.pop();
                    } else {
                        query.push("hd");
                    }
                    offset = 0;
                    push(&mut rows, &query, offset, "search");
                }
                2 => {
                    offset += 1;
                    push(&mut rows, &query, offset, "search");
                }
                3 => push(&mut rows, &query, offset, "click"),
                4 => push(&mut rows, &query, offset, "add_to_cart"),
                5 => push(&mut rows, &query, offset, "filter_click"),
                6 => push(&mut rows, &query, offset, "similar_click"),
                _ => push(&mut rows, &query, offset, "download"),
            }
            last = next;
        }
    }
    rows
}

/// A conditional frequency the calibration log is built to exhibit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    /// Oldest first.
    pub history: [UserAction; 3],
    pub next: UserAction,
    pub probability: f64,
}

pub const CALIBRATION_TARGETS: [CalibrationTarget; 3] = [
    CalibrationTarget {
        history: [UserAction::RequestMore, UserAction::ClickResult, UserAction::SearchSimilar],
        next: UserAction::ClickResult,
        probability: 0.41,
    },
    CalibrationTarget {
        history: [UserAction::NewQuery, UserAction::RefineQuery, UserAction::AddToCart],
        next: UserAction::RequestMore,
        probability: 0.13,
    },
    CalibrationTarget {
        history: [UserAction::SearchSimilar, UserAction::NewQuery, UserAction::NewQuery],
        next: UserAction::RefineQuery,
        probability: 0.40,
    },
];

/// Sessions per calibration history.
pub const CALIBRATION_SESSIONS: usize = 100;

/// Follow-up actions for the sessions that do not take the target action,
/// cycled in order.
const FILLERS: [UserAction; 4] = [
    UserAction::AddToCart,
    UserAction::DownloadOrPurchase,
    UserAction::ClusterCategoryClick,
    UserAction::EndConversation,
];

/// Log rows realising [`CALIBRATION_TARGETS`] exactly: for each target,
/// [`CALIBRATION_SESSIONS`] sessions share the history and
/// `probability × 100` of them continue with the target action.
pub fn calibration_log_rows() -> Vec<SessionLogRow> {
    let mut rows = Vec::new();
    let mut ts = 1_600_000_000_000i64;
    for (k, target) in CALIBRATION_TARGETS.iter().enumerate() {
        let hits = (target.probability * CALIBRATION_SESSIONS as f64).round() as usize;
        for s in 0..CALIBRATION_SESSIONS {
            let id = format!("cal{k}-{s:03}");
            let mut push = |query: &str, offset: u32, interaction: &str| {
                ts += 1_000;
                rows.push(SessionLogRow {
                    session_id: id.clone(),
                    ts,
                    query: query.to_string(),
                    content_type: None,
                    offset,
                    interaction: interaction.to_string(),
                });
            };
            // Prefix rows producing the history, then the follow-up row.
            let follow =
                |push: &mut dyn FnMut(&str, u32, &str), action: UserAction, query: &str, offset: u32| match action {
                    UserAction::ClickResult => push(query, offset, "click"),
                    UserAction::AddToCart => push(query, offset, "add_to_cart"),
                    UserAction::DownloadOrPurchase => push(query, offset, "download"),
                    UserAction::ClusterCategoryClick => push(query, offset, "filter_click"),
                    UserAction::RequestMore => push(query, offset + 1, "search"),
                    UserAction::RefineQuery => push(&format!("{query} trail"), 0, "search"),
                    _ => {}
                };
            let (query, offset) = match k {
                0 => {
                    push("cars", 0, "search");
                    push("cars", 1, "search");
                    push("cars", 1, "click");
                    push("cars", 1, "similar_click");
                    ("cars", 1)
                }
                1 => {
                    push("cars", 0, "search");
                    push("cars red", 0, "search");
                    push("cars red", 0, "add_to_cart");
                    ("cars red", 0)
                }
                _ => {
                    push("", 0, "similar_click");
                    push("lake", 0, "search");
                    push("forest", 0, "search");
                    ("forest", 0)
                }
            };
            let action = if s < hits { target.next } else { FILLERS[s % FILLERS.len()] };
            follow(&mut push, action, query, offset);
        }
    }
    rows
}

/// The calibration log turned into a user model.
pub fn calibration_table() -> Result<ConditionalTable> {
    let seqs: Vec<Vec<UserAction>> = sessions_to_sequences(&calibration_log_rows())?.into_values().collect();
    ConditionalTable::build(&seqs)
}

pub fn calibration_key(target: &CalibrationTarget) -> HistoryKey {
    HistoryKey::of(target.history)
}

/// Catalog, user model and environment used by demos and desk-scale
/// experiments.
pub struct Workbench {
    pub catalog: Arc<Catalog>,
    pub table: Arc<ConditionalTable>,
    pub compliance: Arc<CompliancePolicy>,
}

pub const WORKBENCH_ASSETS: usize = 400;
pub const WORKBENCH_SESSIONS: usize = 3000;

impl Workbench {
    pub fn generate(seed: u64) -> Result<Self> {
        let catalog = synthetic_catalog(WORKBENCH_ASSETS, seed);
        let rows = synthetic_logs(WORKBENCH_SESSIONS, seed ^ 0x5eed);
        let seqs: Vec<Vec<UserAction>> = sessions_to_sequences(&rows)?.into_values().collect();
        Ok(Self {
            catalog: Arc::new(catalog),
            table: Arc::new(ConditionalTable::build(&seqs)?),
            compliance: Arc::new(CompliancePolicy::default()),
        })
    }

    pub fn env(&self, cfg: EnvConfig, seed: u64) -> Result<SearchEnv> {
        SearchEnv::new(cfg, self.catalog.clone(), self.table.clone(), self.compliance.clone(), seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AgentAction;
    use crate::usersim::VirtualUser;

    #[test]
    fn catalog_is_deterministic() {
        let a = synthetic_catalog(50, 3);
        assert_eq!(a.len(), 50);
        assert_eq!(a.to_jsonl(), synthetic_catalog(50, 3).to_jsonl());
        assert!(a.assets().iter().all(|x| (2..=6).contains(&x.tags.len())));
    }

    #[test]
    fn logs_map_to_intended_actions() {
        let rows = synthetic_logs(200, 1);
        let seqs = sessions_to_sequences(&rows).unwrap();
        assert_eq!(seqs.len(), 200);
        let all: Vec<UserAction> = seqs.values().flatten().copied().collect();
        for a in UserAction::ALL {
            assert!(all.contains(&a), "{a} never produced");
        }
        assert!(seqs.values().all(|s| s[0] == UserAction::NewQuery));
    }

    #[test]
    fn calibration_table_is_exact() {
        let table = calibration_table().unwrap();
        for t in &CALIBRATION_TARGETS {
            let dist = table.get(&calibration_key(t)).unwrap();
            assert!((dist[t.next.index()] - t.probability).abs() < 1e-12, "{t:?}: {dist:?}");
        }
    }

    #[test]
    fn calibration_sampling() {
        let table = Arc::new(calibration_table().unwrap());
        let mut user = VirtualUser::new(table, Arc::new(CompliancePolicy::identity()), 4);
        let t = &CALIBRATION_TARGETS[1];
        let mut hits = 0;
        for _ in 0..20_000 {
            user.set_history(t.history.map(Some));
            if user.sample(AgentAction::ShowResults).unwrap() == t.next {
                hits += 1;
            }
        }
        assert!((hits as f64 / 20_000.0 - t.probability).abs() < 0.015);
    }

    #[test]
    fn workbench_env_runs() {
        let wb = Workbench::generate(0).unwrap();
        let mut env = wb.env(EnvConfig::default(), 1).unwrap();
        env.reset();
        env.step(AgentAction::ShowResults).unwrap();
    }
}

//! Tabular Q-learning over a compressed state key.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{score_bin, AgentAction, SearchState, UserAction, NUM_AGENT_ACTIONS};
use crate::env::{Decision, Policy, SearchEnv, ValidationSummary};
use crate::error::{Error, Result};
use crate::par::{mix_seed, Execution};

pub type QRow = [f64; NUM_AGENT_ACTIONS];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Probability of taking the greedy action.
    pub epsilon: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self { alpha: 0.1, gamma: 0.70, epsilon: 0.90 }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon must be in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }
}

pub const KEY_HISTORY: usize = 3;

/// Last three user and agent actions (oldest first, `None` = padding), the
/// mean-score bin and the conversation-length bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteStateKey {
    pub users: [Option<UserAction>; KEY_HISTORY],
    pub agents: [Option<AgentAction>; KEY_HISTORY],
    pub score_bin: u8,
    pub length_bin: u8,
}

/// Buckets `{0}, {1..=5}, {6..=15}, {16..=30}, {31..}`.
pub fn length_bin(len: u32) -> u8 {
    match len {
        0 => 0,
        1..=5 => 1,
        6..=15 => 2,
        16..=30 => 3,
        _ => 4,
    }
}

fn last_three<T: Copy>(history: &[T]) -> [Option<T>; KEY_HISTORY] {
    let mut out = [None; KEY_HISTORY];
    let take = history.len().min(KEY_HISTORY);
    for (slot, item) in out[KEY_HISTORY - take..].iter_mut().zip(&history[history.len() - take..]) {
        *slot = Some(*item);
    }
    out
}

pub fn state_key(s: &SearchState) -> DiscreteStateKey {
    DiscreteStateKey {
        users: last_three(&s.history_user),
        agents: last_three(&s.history_agent),
        score_bin: score_bin(s.mean_score()) as u8,
        length_bin: length_bin(s.length_conv),
    }
}

fn slot_str<T: fmt::Display>(slot: &Option<T>) -> String {
    slot.as_ref().map_or_else(|| "pad".to_string(), |a| a.to_string())
}

impl fmt::Display for DiscreteStateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let users: Vec<String> = self.users.iter().map(slot_str).collect();
        let agents: Vec<String> = self.agents.iter().map(slot_str).collect();
        write!(f, "{}|{}|{}|{}", users.join(","), agents.join(","), self.score_bin, self.length_bin)
    }
}

fn parse_slots<T: FromStr>(text: &str) -> Result<[Option<T>; KEY_HISTORY]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != KEY_HISTORY {
        return Err(Error::BadKey(text.to_string()));
    }
    let mut out: [Option<T>; KEY_HISTORY] = [None, None, None];
    for (slot, part) in out.iter_mut().zip(parts) {
        if part != "pad" {
            *slot = Some(part.parse().map_err(|_| Error::BadKey(text.to_string()))?);
        }
    }
    Ok(out)
}

impl FromStr for DiscreteStateKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('|').collect();
        let [users, agents, score, length] = parts[..] else {
            return Err(Error::BadKey(s.to_string()));
        };
        let bin = |t: &str| -> Result<u8> {
            t.parse::<u8>().ok().filter(|b| *b < 5).ok_or_else(|| Error::BadKey(s.to_string()))
        };
        Ok(Self {
            users: parse_slots(users)?,
            agents: parse_slots(agents)?,
            score_bin: bin(score)?,
            length_bin: bin(length)?,
        })
    }
}

/// Sparse Q-table; absent keys read as the zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<K: Eq + Hash> {
    rows: HashMap<K, QRow>,
}

impl<K: Eq + Hash> Default for QTable<K> {
    fn default() -> Self {
        Self { rows: HashMap::new() }
    }
}

impl<K: Eq + Hash + Clone> QTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn row(&self, key: &K) -> QRow {
        self.rows.get(key).copied().unwrap_or([0.0; NUM_AGENT_ACTIONS])
    }

    pub fn get(&self, key: &K, action: AgentAction) -> f64 {
        self.rows.get(key).map_or(0.0, |r| r[action.index()])
    }

    pub fn set(&mut self, key: K, action: AgentAction, value: f64) {
        self.rows.entry(key).or_insert([0.0; NUM_AGENT_ACTIONS])[action.index()] = value;
    }

    pub fn max_value(&self, key: &K) -> f64 {
        self.row(key).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, key: &K) -> AgentAction {
        AgentAction::ALL[argmax(&self.row(key))]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &QRow)> {
        self.rows.iter()
    }

    pub fn is_all_zero(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|&q| q == 0.0))
    }
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `Q(s,a) ← (1−α)Q(s,a) + α(r + γ·max_a' Q(s',a'))`, with the max term 0
/// when `terminal`.
pub fn q_update<K: Eq + Hash + Clone>(
    q: &mut QTable<K>,
    s: &K,
    a: AgentAction,
    r: f64,
    next: &K,
    terminal: bool,
    cfg: &QConfig,
) {
    let future = if terminal { 0.0 } else { q.max_value(next) };
    let old = q.get(s, a);
    q.set(s.clone(), a, (1.0 - cfg.alpha) * old + cfg.alpha * (r + cfg.gamma * future));
}

/// Greedy with probability `epsilon`, uniform otherwise.
pub fn select_action<K: Eq + Hash + Clone, R: Rng>(q: &QTable<K>, key: &K, epsilon: f64, rng: &mut R) -> AgentAction {
    if rng.random::<f64>() < epsilon {
        q.greedy(key)
    } else {
        AgentAction::ALL[rng.random_range(0..NUM_AGENT_ACTIONS)]
    }
}

/// An episodic environment seen through a discrete key.
pub trait TabularEnv {
    type Key: Eq + Hash + Clone;

    fn reset(&mut self) -> Self::Key;

    /// Returns `(reward, next key, done)`.
    fn step(&mut self, action: AgentAction) -> Result<(f64, Self::Key, bool)>;
}

impl TabularEnv for SearchEnv {
    type Key = DiscreteStateKey;

    fn reset(&mut self) -> DiscreteStateKey {
        state_key(&SearchEnv::reset(self))
    }

    fn step(&mut self, action: AgentAction) -> Result<(f64, DiscreteStateKey, bool)> {
        let out = SearchEnv::step(self, action)?;
        Ok((out.reward.total, state_key(&out.next_state), out.done))
    }
}

/// Runs one ε-greedy learning episode; returns its undiscounted return.
pub fn q_episode<E: TabularEnv, R: Rng>(
    env: &mut E,
    q: &mut QTable<E::Key>,
    cfg: &QConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut key = env.reset();
    let mut total = 0.0;
    loop {
        let action = select_action(q, &key, cfg.epsilon, rng);
        let (reward, next, done) = env.step(action)?;
        q_update(q, &key, action, reward, &next, done, cfg);
        total += reward;
        key = next;
        if done {
            return Ok(total);
        }
    }
}

/// Greedy policy read from a Q-table. The reported value is `max_a Q`.
#[derive(Debug, Clone, Copy)]
pub struct GreedyQ<'a>(pub &'a QTable<DiscreteStateKey>);

impl Policy for GreedyQ<'_> {
    type Episode = ();

    fn begin_episode(&self) {}

    fn act(&self, _: &mut (), state: &SearchState, _: &mut ChaCha8Rng) -> Decision {
        let key = state_key(state);
        let row = self.0.row(&key);
        let best = argmax(&row);
        Decision { action: AgentAction::ALL[best], value: row[best] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTrainOptions {
    pub episodes: usize,
    pub validation_episodes: usize,
    pub seed: u64,
}

impl Default for QTrainOptions {
    fn default() -> Self {
        Self { episodes: 350, validation_episodes: 5, seed: 0 }
    }
}

/// Q-learning on `env`; after each training episode the greedy policy is
/// validated with [`crate::env::run_validation`].
pub fn train_q(
    env: &SearchEnv,
    cfg: &QConfig,
    opts: &QTrainOptions,
    exec: Execution,
) -> Result<(QTable<DiscreteStateKey>, Vec<ValidationSummary>)> {
    train_q_with(env, cfg, opts, exec, |_, _| {})
}

/// As [`train_q`], calling `on_validation(episode, summary)` as results arrive.
pub fn train_q_with(
    env: &SearchEnv,
    cfg: &QConfig,
    opts: &QTrainOptions,
    exec: Execution,
    mut on_validation: impl FnMut(usize, &ValidationSummary),
) -> Result<(QTable<DiscreteStateKey>, Vec<ValidationSummary>)> {
    cfg.validate()?;
    if opts.episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be at least 1".into()));
    }
    let mut train_env = env.fork(mix_seed(opts.seed, 11));
    let validation_env = env.fork(mix_seed(opts.seed, 12));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, 13));
    let mut q = QTable::new();
    let mut series = Vec::with_capacity(opts.episodes);
    for episode in 0..opts.episodes {
        q_episode(&mut train_env, &mut q, cfg, &mut rng)?;
        let round = validation_env.fork(mix_seed(validation_env.seed(), episode as u64));
        let summary = crate::env::run_validation(&round, &GreedyQ(&q), opts.validation_episodes, exec)?;
        on_validation(episode, &summary);
        series.push(summary);
    }
    Ok((q, series))
}

#[derive(Serialize, Deserialize)]
struct QCheckpoint {
    format: String,
    config: QConfig,
    table: std::collections::BTreeMap<String, Vec<f64>>,
}

pub const Q_CHECKPOINT_FORMAT: &str = "searchassist-qtable";

/// JSON map from the key's string form to its twelve Q-values.
pub fn q_to_json(q: &QTable<DiscreteStateKey>, cfg: &QConfig) -> String {
    let table = q.iter().map(|(k, row)| (k.to_string(), row.to_vec())).collect();
    let ck = QCheckpoint { format: Q_CHECKPOINT_FORMAT.into(), config: *cfg, table };
    serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
}

pub fn q_from_json(text: &str) -> Result<(QTable<DiscreteStateKey>, QConfig)> {
    let ck: QCheckpoint = serde_json::from_str(text)?;
    if ck.format != Q_CHECKPOINT_FORMAT {
        return Err(Error::Shape(format!("unknown checkpoint format `{}`", ck.format)));
    }
    let mut q = QTable::new();
    for (key, row) in ck.table {
        let row: QRow =
            row.try_into().map_err(|r: Vec<f64>| Error::Shape(format!("row for `{key}` has {} values", r.len())))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("q value"));
        }
        q.rows.insert(key.parse()?, row);
    }
    Ok((q, ck.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::search::{Asset, Catalog};
    use crate::usersim::{CompliancePolicy, ConditionalTable};
    use proptest::prelude::*;
    use std::sync::Arc;
    use AgentAction as A;
    use UserAction as U;

    #[test]
    fn update_examples() {
        let cfg = |alpha, gamma| QConfig { alpha, gamma, epsilon: 1.0 };
        let mut q: QTable<u8> = QTable::new();
        q.set(0, A::ShowResults, 7.0);
        q_update(&mut q, &0, A::ShowResults, 2.0, &1, false, &cfg(1.0, 0.0));
        assert_eq!(q.get(&0, A::ShowResults), 2.0);

        let mut q: QTable<u8> = QTable::new();
        q.set(1, A::Salutation, 2.0);
        q_update(&mut q, &0, A::ProbeUseCase, 1.0, &1, false, &cfg(0.5, 0.9));
        assert!((q.get(&0, A::ProbeUseCase) - 1.4).abs() < 1e-12);

        let mut q: QTable<u8> = QTable::new();
        q.set(1, A::Salutation, 100.0);
        q_update(&mut q, &0, A::ProbeUseCase, -1.0, &1, true, &cfg(0.5, 0.9));
        assert_eq!(q.get(&0, A::ProbeUseCase), -0.5);
    }

    #[test]
    fn selection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut q: QTable<u8> = QTable::new();
        assert_eq!(select_action(&q, &0, 1.0, &mut rng), A::ProbeUseCase);
        q.set(0, A::AskFeedback, 0.3);
        for _ in 0..100 {
            assert_eq!(select_action(&q, &0, 1.0, &mut rng), A::AskFeedback);
        }
        let mut counts = [0usize; 12];
        let n = 100_000;
        for _ in 0..n {
            counts[select_action(&q, &0, 0.0, &mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 12.0).abs() < 0.01);
        }
    }

    fn state(users: &[U], agents: &[A], len: u32, score: f64) -> SearchState {
        SearchState {
            history_user: users.to_vec(),
            history_agent: agents.to_vec(),
            score_results: [score; 10],
            length_conv: len,
        }
    }

    #[test]
    fn key_examples() {
        let k = state_key(&state(&[U::NewQuery], &[], 1, 0.5));
        assert_eq!(k.users, [None, None, Some(U::NewQuery)]);
        assert_eq!(k.agents, [None; 3]);
        assert_eq!(k.score_bin, 2);
        assert_eq!(k.length_bin, 1);

        let a = state(&[U::RequestMore, U::NewQuery, U::ClickResult, U::AddToCart], &[A::ShowResults; 4], 9, 0.2);
        let b = state(&[U::RefineQuery, U::NewQuery, U::ClickResult, U::AddToCart], &[A::ShowResults; 4], 9, 0.2);
        assert_eq!(state_key(&a), state_key(&b));

        assert_eq!([0, 1, 5, 6, 15, 16, 30, 31, 50].map(length_bin), [0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn key_string_round_trip() {
        let k = state_key(&state(&[U::NewQuery, U::ClickResult], &[A::ShowResults], 3, 0.9));
        assert_eq!(k.to_string(), "pad,new_query,click_result|pad,pad,show_results|4|1");
        assert_eq!(k.to_string().parse::<DiscreteStateKey>().unwrap(), k);
        assert!("pad|x|1|1".parse::<DiscreteStateKey>().is_err());
        assert!("pad,pad,pad|pad,pad,pad|9|1".parse::<DiscreteStateKey>().is_err());
    }

    /// Two states, actions indexed 0..12. In state 0, action 0 moves to
    /// state 1 for reward 0; any other action stays for reward 0.1. In state
    /// 1, action 1 returns to state 0 for reward 1; any other action stays
    /// for reward 0.
    struct TwoState {
        s: u8,
    }

    fn transition(s: u8, a: usize) -> (f64, u8) {
        match (s, a) {
            (0, 0) => (0.0, 1),
            (0, _) => (0.1, 0),
            (1, 1) => (1.0, 0),
            _ => (0.0, 1),
        }
    }

    impl TabularEnv for TwoState {
        type Key = u8;

        fn reset(&mut self) -> u8 {
            self.s = 0;
            0
        }

        fn step(&mut self, a: AgentAction) -> Result<(f64, u8, bool)> {
            let (r, next) = transition(self.s, a.index());
            self.s = next;
            Ok((r, next, false))
        }
    }

    fn value_iteration(gamma: f64) -> [[f64; 12]; 2] {
        let mut q = [[0.0; 12]; 2];
        for _ in 0..10_000 {
            let v = [0, 1].map(|s: usize| q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max));
            for s in 0..2u8 {
                for a in 0..12 {
                    let (r, n) = transition(s, a);
                    q[s as usize][a] = r + gamma * v[n as usize];
                }
            }
        }
        q
    }

    #[test]
    fn two_state_mdp_matches_value_iteration() {
        let cfg = QConfig { alpha: 0.1, gamma: 0.8, epsilon: 0.5 };
        let exact = value_iteration(cfg.gamma);
        let mut env = TwoState { s: 0 };
        let mut q: QTable<u8> = QTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut key = env.reset();
        for _ in 0..200_000 {
            let a = select_action(&q, &key, cfg.epsilon, &mut rng);
            let (r, next, _) = env.step(a).unwrap();
            q_update(&mut q, &key, a, r, &next, false, &cfg);
            key = next;
        }
        for s in 0..2u8 {
            for a in AgentAction::ALL {
                assert!((q.get(&s, a) - exact[s as usize][a.index()]).abs() < 0.01);
            }
            assert_eq!(q.greedy(&s).index(), argmax(&exact[s as usize]));
        }
    }

    fn env() -> SearchEnv {
        env_with(EnvConfig::default())
    }

    fn env_with(cfg: EnvConfig) -> SearchEnv {
        let catalog = Catalog::load([
            Asset::new("a1", ["car", "city"]),
            Asset::new("a2", ["car", "sporty"]),
            Asset::new("a3", ["car", "city", "night"]),
        ])
        .unwrap();
        let table = ConditionalTable::build(&[
            vec![U::NewQuery, U::ClickResult, U::DownloadOrPurchase, U::EndConversation],
            vec![U::NewQuery, U::RefineQuery, U::EndConversation],
        ])
        .unwrap();
        SearchEnv::new(cfg, Arc::new(catalog), Arc::new(table), Arc::new(CompliancePolicy::default()), 3).unwrap()
    }

    #[test]
    fn zero_reward_table_stays_zero() {
        let e = env_with(EnvConfig { rewards: crate::domain::RewardConfig::zero(), ..EnvConfig::default() });
        let opts = QTrainOptions { episodes: 20, validation_episodes: 2, seed: 1 };
        let (q, series) = train_q(&e, &QConfig::default(), &opts, Execution::Sequential).unwrap();
        assert!(!q.is_empty());
        assert!(q.is_all_zero());
        assert_eq!(series.len(), 20);
    }

    #[test]
    fn training_is_deterministic_and_checkpoints() {
        let opts = QTrainOptions { episodes: 15, validation_episodes: 3, seed: 9 };
        let cfg = QConfig::default();
        let (q1, s1) = train_q(&env(), &cfg, &opts, Execution::Sequential).unwrap();
        let (q2, s2) = train_q(&env(), &cfg, &opts, Execution::Parallel).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(s1, s2);
        let (back, back_cfg) = q_from_json(&q_to_json(&q1, &cfg)).unwrap();
        assert_eq!(back, q1);
        assert_eq!(back_cfg, cfg);
        assert!(QConfig { alpha: 0.0, ..cfg }.validate().is_err());
        assert!(QConfig { gamma: 1.0, ..cfg }.validate().is_err());
    }

    proptest! {
        #[test]
        fn update_matches_formula(
            old in -10.0f64..10.0, r in -5.0f64..5.0, alpha in 0.01f64..1.0, gamma in 0.0f64..0.99,
            next_row in proptest::array::uniform12(-10.0f64..10.0), terminal: bool,
        ) {
            let cfg = QConfig { alpha, gamma, epsilon: 1.0 };
            let mut q: QTable<u8> = QTable::new();
            q.set(0, A::ShowResults, old);
            q.set(0, A::Salutation, 42.0);
            for (a, v) in AgentAction::ALL.iter().zip(next_row) {
                q.set(1, *a, v);
            }
            q_update(&mut q, &0, A::ShowResults, r, &1, terminal, &cfg);
            let max = next_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let expect = (1.0 - alpha) * old + alpha * (r + if terminal { 0.0 } else { gamma * max });
            prop_assert!((q.get(&0, A::ShowResults) - expect).abs() < 1e-12);
            prop_assert_eq!(q.get(&0, A::Salutation), 42.0);
            prop_assert_eq!(q.row(&1).to_vec(), next_row.to_vec());
        }

        #[test]
        fn argmax_shift_invariant(row in proptest::array::uniform12(-5.0f64..5.0), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = row.iter().map(|x| x + c).collect();
            prop_assert_eq!(argmax(&row), argmax(&shifted));
        }

        #[test]
        fn q_bounded(rewards in proptest::collection::vec((0usize..3, 0usize..12, -1.0f64..1.0, 0usize..3), 1..300)) {
            let cfg = QConfig { alpha: 0.5, gamma: 0.7, epsilon: 1.0 };
            let mut q: QTable<usize> = QTable::new();
            for (s, a, r, n) in rewards {
                q_update(&mut q, &s, AgentAction::ALL[a], r, &n, false, &cfg);
            }
            let bound = 1.0 / (1.0 - cfg.gamma) + 1e-9;
            prop_assert!(q.iter().all(|(_, row)| row.iter().all(|v| v.abs() <= bound)));
        }
    }
}

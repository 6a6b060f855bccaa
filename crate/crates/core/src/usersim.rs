//! Stochastic virtual user estimated from session logs.
//!
//! Log rows are mapped to symbolic user actions, per-session action
//! sequences are turned into conditional distributions over the next action
//! given the last three, and a [`VirtualUser`] samples from those
//! distributions after reweighting them by the agent's last action.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AgentAction, UserAction, NUM_AGENT_ACTIONS, NUM_USER_ACTIONS};
use crate::error::{Error, Result};

pub const USER_HISTORY: usize = 3;

pub type Distribution9 = [f64; NUM_USER_ACTIONS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Search,
    Click,
    AddToCart,
    FilterClick,
    SimilarClick,
    /// Download or purchase of an asset.
    Download,
}

impl FromStr for Interaction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "search" => Interaction::Search,
            "click" => Interaction::Click,
            "add_to_cart" => Interaction::AddToCart,
            "filter_click" => Interaction::FilterClick,
            "similar_click" => Interaction::SimilarClick,
            "download" => Interaction::Download,
            other => return Err(Error::UnknownInteraction(other.to_string())),
        })
    }
}

/// One row of a query/session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogRow {
    pub session_id: String,
    /// Milliseconds since epoch.
    pub ts: i64,
    pub query: String,
    #[serde(default)]
    pub content_type: Option<String>,
    #[serde(default)]
    pub offset: u32,
    pub interaction: String,
}

impl SessionLogRow {
    pub fn interaction(&self) -> Result<Interaction> {
        self.interaction.parse()
    }
}

pub fn query_tokens(query: &str) -> BTreeSet<String> {
    query.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Maps a log row to a user action given every earlier row of its session.
pub fn map_log_row(row: &SessionLogRow, prior: &[SessionLogRow]) -> Result<UserAction> {
    Ok(match row.interaction()? {
        Interaction::Click => UserAction::ClickResult,
        Interaction::AddToCart => UserAction::AddToCart,
        Interaction::FilterClick => UserAction::ClusterCategoryClick,
        Interaction::SimilarClick => UserAction::SearchSimilar,
        Interaction::Download => UserAction::DownloadOrPurchase,
        Interaction::Search => {
            let tokens = query_tokens(&row.query);
            let last_search = prior.iter().rev().find(|r| r.interaction().ok() == Some(Interaction::Search));
            match last_search {
                Some(last) if query_tokens(&last.query) == tokens && row.offset > last.offset => {
                    UserAction::RequestMore
                }
                _ => {
                    let overlaps = prior
                        .iter()
                        .filter(|r| !r.query.is_empty())
                        .any(|r| !query_tokens(&r.query).is_disjoint(&tokens));
                    if overlaps {
                        UserAction::RefineQuery
                    } else {
                        UserAction::NewQuery
                    }
                }
            }
        }
    })
}

pub fn read_log_rows<R: BufRead>(reader: R) -> Result<Vec<SessionLogRow>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SessionLogRow =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        row.interaction().map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Groups rows by session, orders each session by timestamp, maps every row
/// and closes each session with [`UserAction::EndConversation`].
pub fn sessions_to_sequences(rows: &[SessionLogRow]) -> Result<BTreeMap<String, Vec<UserAction>>> {
    let mut sessions: BTreeMap<&str, Vec<&SessionLogRow>> = BTreeMap::new();
    for row in rows {
        sessions.entry(&row.session_id).or_default().push(row);
    }
    let mut out = BTreeMap::new();
    for (id, mut rows) in sessions {
        rows.sort_by_key(|r| r.ts);
        let ordered: Vec<SessionLogRow> = rows.into_iter().cloned().collect();
        let mut actions = Vec::with_capacity(ordered.len() + 1);
        for i in 0..ordered.len() {
            actions.push(map_log_row(&ordered[i], &ordered[..i])?);
        }
        actions.push(UserAction::EndConversation);
        out.insert(id.to_string(), actions);
    }
    Ok(out)
}

/// A slot of a history key. `Any` marks slots dropped by backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeySlot {
    Any,
    Pad,
    Act(UserAction),
}

impl From<Option<UserAction>> for KeySlot {
    fn from(a: Option<UserAction>) -> Self {
        a.map_or(KeySlot::Pad, KeySlot::Act)
    }
}

impl fmt::Display for KeySlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeySlot::Any => f.write_str("*"),
            KeySlot::Pad => f.write_str("pad"),
            KeySlot::Act(a) => f.write_str(a.name()),
        }
    }
}

impl FromStr for KeySlot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "*" => Ok(KeySlot::Any),
            "pad" => Ok(KeySlot::Pad),
            other => other.parse().map(KeySlot::Act),
        }
    }
}

/// Last three user actions, oldest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistoryKey(pub [KeySlot; USER_HISTORY]);

impl HistoryKey {
    pub fn from_history(history: &[Option<UserAction>; USER_HISTORY]) -> Self {
        HistoryKey(history.map(KeySlot::from))
    }

    pub fn of(actions: [UserAction; USER_HISTORY]) -> Self {
        HistoryKey(actions.map(KeySlot::Act))
    }

    /// The key with its oldest `n` slots replaced by `Any`.
    fn backed_off(self, n: usize) -> Self {
        let mut slots = self.0;
        for s in slots.iter_mut().take(n) {
            *s = KeySlot::Any;
        }
        HistoryKey(slots)
    }
}

impl fmt::Display for HistoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for HistoryKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != USER_HISTORY {
            return Err(Error::BadKey(s.to_string()));
        }
        let slot = |p: &str| p.parse::<KeySlot>().map_err(|_| Error::BadKey(s.to_string()));
        Ok(HistoryKey([slot(parts[0])?, slot(parts[1])?, slot(parts[2])?]))
    }
}

/// P(next user action | last three user actions), with backoff entries for
/// shorter histories stored under keys whose oldest slots are `*`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionalTable {
    entries: BTreeMap<HistoryKey, Distribution9>,
}

impl ConditionalTable {
    pub fn build<S: AsRef<[UserAction]>>(sequences: &[S]) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::NoSessions);
        }
        let mut counts: BTreeMap<HistoryKey, [u64; NUM_USER_ACTIONS]> = BTreeMap::new();
        for seq in sequences {
            let seq = seq.as_ref();
            for (i, &next) in seq.iter().enumerate() {
                let mut hist = [None; USER_HISTORY];
                for (k, slot) in hist.iter_mut().enumerate() {
                    let back = USER_HISTORY - k;
                    if i >= back {
                        *slot = Some(seq[i - back]);
                    }
                }
                let key = HistoryKey::from_history(&hist);
                for level in 0..=USER_HISTORY {
                    counts.entry(key.backed_off(level)).or_default()[next.index()] += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::NoSessions);
        }
        let entries = counts
            .into_iter()
            .map(|(k, c)| {
                let total: u64 = c.iter().sum();
                (k, c.map(|n| n as f64 / total as f64))
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Number of full-length (non-backoff) keys.
    pub fn full_key_count(&self) -> usize {
        self.entries.keys().filter(|k| k.0[0] != KeySlot::Any).count()
    }

    pub fn get(&self, key: &HistoryKey) -> Option<&Distribution9> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&HistoryKey, &Distribution9)> {
        self.entries.iter()
    }

    /// Distribution for `history`, backing off 3 → 2 → 1 → marginal.
    pub fn lookup(&self, history: &[Option<UserAction>; USER_HISTORY]) -> Result<&Distribution9> {
        if self.entries.is_empty() {
            return Err(Error::EmptyTable);
        }
        let key = HistoryKey::from_history(history);
        (0..=USER_HISTORY).find_map(|level| self.entries.get(&key.backed_off(level))).ok_or(Error::EmptyTable)
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, Vec<f64>> = self.entries.iter().map(|(k, d)| (k.to_string(), d.to_vec())).collect();
        serde_json::to_string_pretty(&map).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, Vec<f64>> = serde_json::from_str(text)?;
        let mut entries = BTreeMap::new();
        for (k, v) in map {
            let key: HistoryKey = k.parse()?;
            let dist: Distribution9 =
                v.try_into().map_err(|_| Error::Shape(format!("entry `{k}` must have 9 probabilities")))?;
            check_distribution(&dist).map_err(|_| Error::BadKey(format!("{k}: not a distribution")))?;
            entries.insert(key, dist);
        }
        Ok(Self { entries })
    }
}

fn check_distribution(d: &Distribution9) -> Result<()> {
    let sum: f64 = d.iter().sum();
    if d.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(())
}

/// How the agent's last action reweights the user's next-action distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompliancePolicy {
    /// `multipliers[agent][user]`, all positive.
    pub multipliers: [[f64; NUM_USER_ACTIONS]; NUM_AGENT_ACTIONS],
    /// Probability that a sign-up prompt is accepted (once per episode).
    pub sign_up_probability: f64,
}

impl CompliancePolicy {
    pub fn identity() -> Self {
        Self { multipliers: [[1.0; NUM_USER_ACTIONS]; NUM_AGENT_ACTIONS], sign_up_probability: 0.0 }
    }

    pub fn set(&mut self, agent: AgentAction, user: UserAction, multiplier: f64) -> &mut Self {
        self.multipliers[agent.index()][user.index()] = multiplier;
        self
    }

    pub fn multiplier(&self, agent: AgentAction, user: UserAction) -> f64 {
        self.multipliers[agent.index()][user.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.multipliers.iter().flatten().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidConfig("compliance multipliers must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sign_up_probability) {
            return Err(Error::InvalidConfig("sign-up probability must be in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for CompliancePolicy {
    fn default() -> Self {
        use AgentAction as A;
        use UserAction as U;
        let mut p = Self::identity();
        p.set(A::AddToCartPrompt, U::AddToCart, 3.0)
            .set(A::ProbeToRefine, U::RefineQuery, 3.0)
            .set(A::ProbeUseCase, U::RefineQuery, 3.0)
            .set(A::ClusterCategories, U::ClusterCategoryClick, 3.0)
            .set(A::AskToDownload, U::DownloadOrPurchase, 3.0)
            .set(A::AskToPurchase, U::DownloadOrPurchase, 3.0)
            .set(A::ProvideDiscount, U::DownloadOrPurchase, 3.0)
            .set(A::ShowResults, U::ClickResult, 1.5);
        for probe in [A::ProbeUseCase, A::ProbeToRefine, A::ClusterCategories] {
            p.set(probe, U::EndConversation, 0.5);
        }
        p.sign_up_probability = 0.3;
        p
    }
}

/// Reweights `base` by the policy row for `agent_action` and renormalizes.
pub fn adjust_distribution(
    base: &Distribution9,
    agent_action: AgentAction,
    policy: &CompliancePolicy,
) -> Result<Distribution9> {
    let row = &policy.multipliers[agent_action.index()];
    let mut out = [0.0; NUM_USER_ACTIONS];
    for ((o, &b), &m) in out.iter_mut().zip(base).zip(row) {
        *o = b * m;
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateDistribution);
    }
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// Finite-state virtual user. Owns its RNG and history; confine each
/// instance to one worker.
#[derive(Debug, Clone)]
pub struct VirtualUser {
    table: Arc<ConditionalTable>,
    policy: Arc<CompliancePolicy>,
    history: [Option<UserAction>; USER_HISTORY],
    rng: ChaCha8Rng,
}

impl VirtualUser {
    pub fn new(table: Arc<ConditionalTable>, policy: Arc<CompliancePolicy>, seed: u64) -> Self {
        Self { table, policy, history: [None; USER_HISTORY], rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn reset(&mut self) {
        self.history = [None; USER_HISTORY];
    }

    pub fn history(&self) -> &[Option<UserAction>; USER_HISTORY] {
        &self.history
    }

    pub fn set_history(&mut self, history: [Option<UserAction>; USER_HISTORY]) {
        self.history = history;
    }

    pub fn table(&self) -> &ConditionalTable {
        &self.table
    }

    pub fn policy(&self) -> &CompliancePolicy {
        &self.policy
    }

    /// Records an action the user took outside of sampling (e.g. the
    /// opening query).
    pub fn record(&mut self, action: UserAction) {
        self.history.rotate_left(1);
        self.history[USER_HISTORY - 1] = Some(action);
    }

    /// Current next-action distribution after the agent's action.
    pub fn distribution(&self, last_agent_action: AgentAction) -> Result<Distribution9> {
        let base = self.table.lookup(&self.history)?;
        adjust_distribution(base, last_agent_action, &self.policy)
    }

    pub fn sample(&mut self, last_agent_action: AgentAction) -> Result<UserAction> {
        let dist = self.distribution(last_agent_action)?;
        let index = WeightedIndex::new(dist).map_err(|_| Error::DegenerateDistribution)?;
        let action = UserAction::ALL[index.sample(&mut self.rng)];
        self.record(action);
        Ok(action)
    }

    /// Whether the user accepts a sign-up prompt this turn.
    pub fn accepts_sign_up(&mut self, agent_action: AgentAction) -> bool {
        agent_action == AgentAction::SignUpPrompt && self.rng.random::<f64>() < self.policy.sign_up_probability
    }
}

pub fn sample_user_action(user: &mut VirtualUser, last_agent_action: AgentAction) -> Result<UserAction> {
    user.sample(last_agent_action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use UserAction as U;

    fn row(query: &str, offset: u32, interaction: &str) -> SessionLogRow {
        SessionLogRow {
            session_id: "s".into(),
            ts: 0,
            query: query.into(),
            content_type: None,
            offset,
            interaction: interaction.into(),
        }
    }

    #[test]
    fn mapping_rules() {
        let first = row("flower", 0, "search");
        assert_eq!(map_log_row(&first, &[]).unwrap(), U::NewQuery);
        let refine = row("flower buds", 0, "search");
        assert_eq!(map_log_row(&refine, std::slice::from_ref(&first)).unwrap(), U::RefineQuery);
        let more = row("flower", 1, "search");
        assert_eq!(map_log_row(&more, std::slice::from_ref(&first)).unwrap(), U::RequestMore);
        let fresh = row("car", 0, "search");
        assert_eq!(map_log_row(&fresh, std::slice::from_ref(&first)).unwrap(), U::NewQuery);
        for (i, a) in [
            ("click", U::ClickResult),
            ("add_to_cart", U::AddToCart),
            ("filter_click", U::ClusterCategoryClick),
            ("similar_click", U::SearchSimilar),
            ("download", U::DownloadOrPurchase),
        ] {
            assert_eq!(map_log_row(&row("flower", 0, i), std::slice::from_ref(&first)).unwrap(), a);
        }
        assert!(matches!(map_log_row(&row("x", 0, "hover"), &[]), Err(Error::UnknownInteraction(_))));
    }

    #[test]
    fn sequences_sorted_and_terminated() {
        let mut rows = vec![row("cat", 0, "click"), row("cat", 0, "search")];
        rows[0].ts = 20;
        rows[1].ts = 10;
        let seqs = sessions_to_sequences(&rows).unwrap();
        assert_eq!(seqs["s"], vec![U::NewQuery, U::ClickResult, U::EndConversation]);
    }

    #[test]
    fn read_rows_reports_line() {
        let text = "{\"session_id\":\"a\",\"ts\":1,\"query\":\"x\",\"content_type\":null,\"offset\":0,\"interaction\":\"search\"}\n\
                    {\"session_id\":\"a\",\"ts\":2,\"query\":\"x\",\"content_type\":null,\"offset\":0,\"interaction\":\"jump\"}\n";
        match read_log_rows(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn table_single_observation() {
        let t = ConditionalTable::build(&[vec![U::NewQuery, U::ClickResult]]).unwrap();
        let d = t.get(&"pad,pad,new_query".parse().unwrap()).unwrap();
        assert_eq!(d[U::ClickResult.index()], 1.0);
    }

    #[test]
    fn table_normalizes_counts() {
        let mut seqs = Vec::new();
        for next in [U::ClickResult, U::ClickResult, U::ClickResult, U::AddToCart] {
            seqs.push(vec![U::NewQuery, next]);
        }
        let t = ConditionalTable::build(&seqs).unwrap();
        let d = t.lookup(&[None, None, Some(U::NewQuery)]).unwrap();
        assert_eq!(d[U::ClickResult.index()], 0.75);
        assert_eq!(d[U::AddToCart.index()], 0.25);
        assert!(matches!(ConditionalTable::build::<Vec<U>>(&[]), Err(Error::NoSessions)));
    }

    #[test]
    fn backoff_levels() {
        let t = ConditionalTable::build(&[vec![U::NewQuery, U::ClickResult, U::AddToCart]]).unwrap();
        // Unseen full key with a seen 2-suffix.
        let d = t.lookup(&[Some(U::SearchSimilar), Some(U::NewQuery), Some(U::ClickResult)]).unwrap();
        assert_eq!(d[U::AddToCart.index()], 1.0);
        // Unseen everywhere falls back to the marginal.
        let d = t.lookup(&[Some(U::RequestMore); 3]).unwrap();
        assert!((d[U::NewQuery.index()] - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(ConditionalTable::default().lookup(&[None; 3]), Err(Error::EmptyTable)));
    }

    #[test]
    fn table_json_round_trip() {
        let t = ConditionalTable::build(&[vec![U::NewQuery, U::RefineQuery, U::EndConversation]]).unwrap();
        let json = t.to_json();
        assert!(json.contains("\"pad,new_query,refine_query\""));
        assert!(json.contains("\"*,*,*\""));
        assert_eq!(ConditionalTable::from_json(&json).unwrap(), t);
        assert!(ConditionalTable::from_json("{\"a,b\": [1.0]}").is_err());
        let bad = format!("{{\"pad,pad,pad\": {:?}}}", [0.5; 9]);
        assert!(ConditionalTable::from_json(&bad).is_err());
    }

    #[test]
    fn adjust_examples() {
        let uniform = [1.0 / 9.0; 9];
        let id = CompliancePolicy::identity();
        let out = adjust_distribution(&uniform, AgentAction::ShowResults, &id).unwrap();
        for (a, b) in out.iter().zip(uniform) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut p = CompliancePolicy::identity();
        p.set(AgentAction::AddToCartPrompt, U::AddToCart, 3.0);
        let out = adjust_distribution(&uniform, AgentAction::AddToCartPrompt, &p).unwrap();
        assert!((out[U::AddToCart.index()] - 3.0 / 11.0).abs() < 1e-12);
        let mut base = [0.125; 9];
        base[2] = 0.0;
        let out = adjust_distribution(&base, AgentAction::AddToCartPrompt, &p).unwrap();
        assert_eq!(out[2], 0.0);
        assert!(adjust_distribution(&[0.0; 9], AgentAction::Salutation, &p).is_err());
    }

    #[test]
    fn default_policy_is_valid() {
        let p = CompliancePolicy::default();
        p.validate().unwrap();
        assert_eq!(p.multiplier(AgentAction::AskToDownload, U::DownloadOrPurchase), 3.0);
        assert_eq!(p.multiplier(AgentAction::ProbeToRefine, U::EndConversation), 0.5);
        let mut bad = p.clone();
        bad.multipliers[0][0] = 0.0;
        assert!(bad.validate().is_err());
    }

    fn user_with(seqs: &[Vec<U>], seed: u64) -> VirtualUser {
        VirtualUser::new(Arc::new(ConditionalTable::build(seqs).unwrap()), Arc::new(CompliancePolicy::identity()), seed)
    }

    #[test]
    fn deterministic_distribution_always_sampled() {
        let mut user = user_with(&[vec![U::NewQuery, U::ClickResult]], 3);
        for _ in 0..100 {
            user.set_history([None, None, Some(U::NewQuery)]);
            assert_eq!(user.sample(AgentAction::ShowResults).unwrap(), U::ClickResult);
        }
        assert_eq!(user.history(), &[None, Some(U::NewQuery), Some(U::ClickResult)]);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let seqs = vec![
            vec![U::NewQuery, U::ClickResult, U::AddToCart],
            vec![U::NewQuery, U::RefineQuery, U::RequestMore, U::ClickResult],
        ];
        let run = |seed| {
            let mut u = user_with(&seqs, seed);
            (0..200).map(|_| u.sample(AgentAction::ShowResults).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn empirical_frequencies_converge() {
        let seqs = vec![
            vec![U::NewQuery, U::ClickResult, U::AddToCart, U::DownloadOrPurchase],
            vec![U::NewQuery, U::RefineQuery, U::RequestMore, U::ClickResult],
            vec![U::NewQuery, U::ClickResult, U::ClickResult],
        ];
        let mut user = user_with(&seqs, 5);
        let history = [None, None, Some(U::NewQuery)];
        let expected = *user.table().lookup(&history).unwrap();
        let mut counts = [0usize; 9];
        let n = 100_000;
        for _ in 0..n {
            user.set_history(history);
            counts[user.sample(AgentAction::Salutation).unwrap().index()] += 1;
        }
        let l1: f64 = counts.iter().zip(expected).map(|(&c, p)| (c as f64 / n as f64 - p).abs()).sum();
        assert!(l1 < 0.02, "l1 = {l1}");
    }

    #[test]
    fn sign_up_needs_prompt() {
        let mut user = user_with(&[vec![U::NewQuery]], 1);
        assert!(!user.accepts_sign_up(AgentAction::SignUpPrompt));
        let mut policy = CompliancePolicy::identity();
        policy.sign_up_probability = 1.0;
        let mut user = VirtualUser::new(user.table.clone(), Arc::new(policy), 1);
        assert!(user.accepts_sign_up(AgentAction::SignUpPrompt));
        assert!(!user.accepts_sign_up(AgentAction::ShowResults));
    }

    fn arb_sequences() -> impl Strategy<Value = Vec<Vec<U>>> {
        proptest::collection::vec(proptest::collection::vec(0usize..9, 1..8), 1..12)
            .prop_map(|v| v.into_iter().map(|s| s.into_iter().map(|i| U::ALL[i]).collect()).collect())
    }

    proptest! {
        #[test]
        fn stored_distributions_are_normalized(seqs in arb_sequences()) {
            let t = ConditionalTable::build(&seqs).unwrap();
            for (_, d) in t.entries() {
                prop_assert!(check_distribution(d).is_ok());
            }
        }

        #[test]
        fn build_ignores_session_order(seqs in arb_sequences(), k in 0usize..12) {
            let mut rotated = seqs.clone();
            let n = rotated.len();
            rotated.rotate_left(k % n);
            prop_assert_eq!(ConditionalTable::build(&seqs).unwrap(), ConditionalTable::build(&rotated).unwrap());
        }

        #[test]
        fn adjusted_is_distribution(
            w in proptest::array::uniform9(0.0f64..1.0),
            a in 0usize..12,
            m in proptest::array::uniform9(0.1f64..5.0),
        ) {
            let total: f64 = w.iter().sum();
            prop_assume!(total > 1e-6);
            let base = w.map(|x| x / total);
            let mut p = CompliancePolicy::identity();
            p.multipliers[a] = m;
            let out = adjust_distribution(&base, AgentAction::ALL[a], &p).unwrap();
            prop_assert!(check_distribution(&out).is_ok());
            let id = adjust_distribution(&base, AgentAction::ALL[a], &CompliancePolicy::identity()).unwrap();
            for (x, y) in id.iter().zip(base) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

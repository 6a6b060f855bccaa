//! Episodic conversational-search environment.
//!
//! Each turn the agent acts, the virtual user responds, the search state is
//! updated and the agent is paid an extrinsic reward (how the user reacted
//! to the action), an auxiliary reward (progress on click / cart / category
//! / sign-up metrics) and, on the terminal turn, a task-completion reward.

use std::io::Write;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    discretize_scores, AgentAction, FeedbackCategory, RewardBreakdown, RewardConfig, SearchState, UserAction,
    NUM_AGENT_ACTIONS, NUM_USER_ACTIONS,
};
use crate::error::{Error, Result};
use crate::par::{map_indexed, mix_seed, Execution};
use crate::search::{Catalog, CategoryOptions, ResultPage};
use crate::usersim::{CompliancePolicy, ConditionalTable, VirtualUser};

pub const DEFAULT_MAX_TURNS: u32 = 50;

/// Category of the user's response to each agent action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMatrix {
    /// `cells[agent][user]`.
    pub cells: [[FeedbackCategory; NUM_USER_ACTIONS]; NUM_AGENT_ACTIONS],
    /// Issuing the same prompt twice in a row caps the response at Average.
    pub downgrade_repeated_prompts: bool,
}

impl Default for FeedbackMatrix {
    fn default() -> Self {
        use AgentAction as A;
        use FeedbackCategory::*;
        use UserAction as U;
        let mut cells = [[Average; NUM_USER_ACTIONS]; NUM_AGENT_ACTIONS];
        for a in A::ALL {
            if a.is_prompt() {
                cells[a.index()][U::EndConversation.index()] = Bad;
            }
        }
        let compliant: &[(A, &[U])] = &[
            (A::ProbeUseCase, &[U::RefineQuery]),
            (A::ProbeToRefine, &[U::RefineQuery]),
            (A::ClusterCategories, &[U::ClusterCategoryClick]),
            (A::ShowResults, &[U::ClickResult, U::AddToCart, U::DownloadOrPurchase]),
            (A::AddToCartPrompt, &[U::AddToCart]),
            (A::AskToDownload, &[U::DownloadOrPurchase]),
            (A::AskToPurchase, &[U::DownloadOrPurchase]),
            (A::ProvideDiscount, &[U::DownloadOrPurchase]),
        ];
        for (a, users) in compliant {
            for u in *users {
                cells[a.index()][u.index()] = Good;
            }
        }
        Self { cells, downgrade_repeated_prompts: true }
    }
}

impl FeedbackMatrix {
    pub fn category(
        &self,
        agent_action: AgentAction,
        user_action: UserAction,
        previous_agent_action: Option<AgentAction>,
    ) -> FeedbackCategory {
        let cat = self.cells[agent_action.index()][user_action.index()];
        if self.downgrade_repeated_prompts
            && cat == FeedbackCategory::Good
            && agent_action.is_prompt()
            && previous_agent_action == Some(agent_action)
        {
            FeedbackCategory::Average
        } else {
            cat
        }
    }
}

pub fn feedback_category(
    agent_action: AgentAction,
    user_action: UserAction,
    previous_agent_action: Option<AgentAction>,
) -> FeedbackCategory {
    FeedbackMatrix::default().category(agent_action, user_action, previous_agent_action)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub max_turns: u32,
    pub rewards: RewardConfig,
    pub feedback: FeedbackMatrix,
    /// Queries the simulated user opens with. Defaults to every catalog tag
    /// shared by at least two assets.
    #[serde(default)]
    pub query_pool: Option<Vec<Vec<String>>>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            rewards: RewardConfig::default(),
            feedback: FeedbackMatrix::default(),
            query_pool: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::InvalidConfig("max_turns must be at least 1".into()));
        }
        if let Some(pool) = &self.query_pool {
            if pool.is_empty() || pool.iter().any(Vec::is_empty) {
                return Err(Error::InvalidConfig("query pool entries must be non-empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxiliaryCounters {
    pub click_result: u32,
    pub add_to_cart: u32,
    pub cluster_click: u32,
    pub sign_up: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: SearchState,
    pub reward: RewardBreakdown,
    pub user_action: UserAction,
    pub feedback: FeedbackCategory,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub total_reward: f64,
    pub num_turns: u32,
    pub task_completed: bool,
    pub mean_state_value: f64,
}

/// One turn of an exported episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub turn: u32,
    pub query: Vec<String>,
    pub mean_score: f64,
    pub agent_action: AgentAction,
    pub user_action: UserAction,
    pub feedback: FeedbackCategory,
    pub reward: RewardBreakdown,
    pub done: bool,
}

pub fn write_trace_jsonl<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SearchEnv {
    cfg: Arc<EnvConfig>,
    catalog: Arc<Catalog>,
    queries: Arc<Vec<Vec<String>>>,
    user: VirtualUser,
    rng: ChaCha8Rng,
    seed: u64,
    state: SearchState,
    query: Vec<String>,
    offset: usize,
    page: Option<ResultPage>,
    categories: CategoryOptions,
    counters: AuxiliaryCounters,
    completed: bool,
    done: bool,
    turns: u32,
    last_agent: Option<AgentAction>,
    trace: Option<Vec<TraceRecord>>,
}

impl SearchEnv {
    pub fn new(
        cfg: EnvConfig,
        catalog: Arc<Catalog>,
        table: Arc<ConditionalTable>,
        policy: Arc<CompliancePolicy>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        policy.validate()?;
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        let queries = match &cfg.query_pool {
            Some(pool) => pool.clone(),
            None => catalog.tags().filter(|&(_, n)| n >= 2).map(|(t, _)| vec![t.to_string()]).collect(),
        };
        if queries.is_empty() {
            return Err(Error::InvalidConfig("catalog yields no queries".into()));
        }
        Ok(Self {
            cfg: Arc::new(cfg),
            catalog,
            queries: Arc::new(queries),
            user: VirtualUser::new(table, policy, mix_seed(seed, 1)),
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 2)),
            seed,
            state: SearchState::default(),
            query: Vec::new(),
            offset: 0,
            page: None,
            categories: CategoryOptions::default(),
            counters: AuxiliaryCounters::default(),
            completed: false,
            done: true,
            turns: 0,
            last_agent: None,
            trace: None,
        })
    }

    /// Restarts every random stream from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.user.reseed(mix_seed(seed, 1));
        self.rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
    }

    /// Copy of this environment with independent random streams.
    pub fn fork(&self, seed: u64) -> Self {
        let mut env = self.clone();
        env.reseed(seed);
        env.trace = None;
        env
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn counters(&self) -> AuxiliaryCounters {
        self.counters
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn turns(&self) -> u32 {
        self.turns
    }

    pub fn current_query(&self) -> &[String] {
        &self.query
    }

    pub fn task_completed(&self) -> bool {
        self.completed
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn reset(&mut self) -> SearchState {
        self.user.reset();
        self.user.record(UserAction::NewQuery);
        self.state = SearchState::default();
        self.counters = AuxiliaryCounters::default();
        self.completed = false;
        self.done = false;
        self.turns = 0;
        self.last_agent = None;
        self.categories = CategoryOptions::default();
        self.query = self.queries.choose(&mut self.rng).expect("non-empty pool").clone();
        self.offset = 0;
        self.run_search();
        self.state.push_user(UserAction::NewQuery);
        self.state.length_conv = 1;
        self.state.clone()
    }

    pub fn step(&mut self, agent_action: AgentAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        match agent_action {
            AgentAction::ShowResults => self.run_search(),
            AgentAction::ClusterCategories => {
                self.run_search();
                self.categories = self.current_categories();
            }
            _ => {}
        }

        let user_action = self.user.sample(agent_action)?;
        let signed_up = !self.counters.sign_up && self.user.accepts_sign_up(agent_action);
        self.apply_user_action(user_action);

        self.state.push_agent(agent_action);
        self.state.push_user(user_action);
        self.state.length_conv += 1;
        self.turns += 1;

        let w = self.cfg.rewards.auxiliary;
        let mut auxiliary = 0.0;
        match user_action {
            UserAction::ClickResult => {
                self.counters.click_result += 1;
                auxiliary += w.click_result;
            }
            UserAction::AddToCart => {
                self.counters.add_to_cart += 1;
                auxiliary += w.add_to_cart;
            }
            UserAction::ClusterCategoryClick => {
                self.counters.cluster_click += 1;
                auxiliary += w.cluster_click;
            }
            UserAction::DownloadOrPurchase => self.completed = true,
            _ => {}
        }
        if signed_up {
            self.counters.sign_up = true;
            auxiliary += w.sign_up;
        }

        let mut feedback = self.cfg.feedback.category(agent_action, user_action, self.last_agent);
        if signed_up {
            feedback = FeedbackCategory::Good;
        }
        let extrinsic = self.cfg.rewards.extrinsic(feedback);

        self.done = user_action == UserAction::EndConversation || self.turns >= self.cfg.max_turns;
        let task_completion = if self.done && self.completed { self.cfg.rewards.task_completion } else { 0.0 };
        let reward = RewardBreakdown::new(extrinsic, auxiliary, task_completion);
        self.last_agent = Some(agent_action);

        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                turn: self.turns,
                query: self.query.clone(),
                mean_score: self.state.mean_score(),
                agent_action,
                user_action,
                feedback,
                reward,
                done: self.done,
            });
        }

        Ok(StepOutcome { next_state: self.state.clone(), reward, user_action, feedback, done: self.done })
    }

    fn current_categories(&self) -> CategoryOptions {
        match &self.page {
            Some(page) => self.catalog.cluster_categories(&self.query, page),
            None => CategoryOptions::default(),
        }
    }

    fn apply_user_action(&mut self, action: UserAction) {
        match action {
            UserAction::NewQuery => {
                self.query = self.queries.choose(&mut self.rng).expect("non-empty pool").clone();
                self.offset = 0;
                self.categories = CategoryOptions::default();
                self.run_search();
            }
            UserAction::RefineQuery | UserAction::ClusterCategoryClick => {
                let options = if action == UserAction::ClusterCategoryClick && !self.categories.is_empty() {
                    self.categories.clone()
                } else {
                    self.current_categories()
                };
                let extra = match options.labels().choose(&mut self.rng) {
                    Some(label) => Some(label.clone()),
                    None => self.random_tag_outside_query(),
                };
                if let Some(tag) = extra {
                    self.query.push(tag);
                    self.offset = 0;
                    self.categories = CategoryOptions::default();
                    self.run_search();
                }
            }
            UserAction::RequestMore => {
                self.offset += 1;
                self.run_search();
            }
            UserAction::SearchSimilar => {
                let picked = self
                    .page
                    .as_ref()
                    .and_then(|p| p.entries.choose(&mut self.rng))
                    .and_then(|e| self.catalog.get(&e.id))
                    .map(|a| a.tags.iter().cloned().collect::<Vec<_>>());
                if let Some(tags) = picked {
                    self.query = tags;
                    self.offset = 0;
                    self.categories = CategoryOptions::default();
                    self.run_search();
                }
            }
            _ => {}
        }
    }

    fn random_tag_outside_query(&mut self) -> Option<String> {
        let candidates: Vec<&str> =
            self.catalog.tags().map(|(t, _)| t).filter(|t| !self.query.iter().any(|q| q == t)).collect();
        if candidates.is_empty() {
            return None;
        }
        let i = self.rng.random_range(0..candidates.len());
        Some(candidates[i].to_string())
    }

    fn run_search(&mut self) {
        let page = self.catalog.search(&self.query, self.offset).unwrap_or_else(|_| ResultPage {
            query: self.query.clone(),
            offset: self.offset,
            entries: vec![],
        });
        self.state.score_results = discretize_scores(&page.padded_scores()).expect("jaccard scores lie in [0, 1]");
        self.page = Some(page);
    }
}

/// An agent action chosen for a state, with the agent's estimate of the
/// state's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: AgentAction,
    pub value: f64,
}

/// Action selector used for evaluation. `Episode` carries whatever the
/// policy needs to remember within one episode (e.g. recurrent state).
pub trait Policy: Sync {
    type Episode;

    fn begin_episode(&self) -> Self::Episode;

    fn act(&self, episode: &mut Self::Episode, state: &SearchState, rng: &mut ChaCha8Rng) -> Decision;
}

/// Uniformly random actions, value 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    type Episode = ();

    fn begin_episode(&self) {}

    fn act(&self, _: &mut (), _: &SearchState, rng: &mut ChaCha8Rng) -> Decision {
        Decision { action: AgentAction::ALL[rng.random_range(0..NUM_AGENT_ACTIONS)], value: 0.0 }
    }
}

/// Always plays the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub AgentAction);

impl Policy for FixedPolicy {
    type Episode = ();

    fn begin_episode(&self) {}

    fn act(&self, _: &mut (), _: &SearchState, _: &mut ChaCha8Rng) -> Decision {
        Decision { action: self.0, value: 0.0 }
    }
}

/// Runs one episode without learning.
pub fn run_episode<P: Policy>(env: &mut SearchEnv, policy: &P, rng: &mut ChaCha8Rng) -> Result<EpisodeMetrics> {
    let mut state = env.reset();
    let mut episode = policy.begin_episode();
    let mut total = 0.0;
    let mut value_sum = 0.0;
    let mut visited = 0u32;
    loop {
        let decision = policy.act(&mut episode, &state, rng);
        value_sum += decision.value;
        visited += 1;
        let out = env.step(decision.action)?;
        total += out.reward.total;
        state = out.next_state;
        if out.done {
            break;
        }
    }
    Ok(EpisodeMetrics {
        total_reward: total,
        num_turns: env.turns(),
        task_completed: env.task_completed(),
        mean_state_value: value_sum / f64::from(visited),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub mean_reward: f64,
    pub mean_length: f64,
    pub completion_rate: f64,
    pub mean_state_value: f64,
    pub episodes: Vec<EpisodeMetrics>,
}

impl ValidationSummary {
    pub fn from_episodes(episodes: Vec<EpisodeMetrics>) -> Self {
        let n = episodes.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        Self {
            mean_reward: mean(&|e| e.total_reward),
            mean_length: mean(&|e| f64::from(e.num_turns)),
            completion_rate: mean(&|e| if e.task_completed { 1.0 } else { 0.0 }),
            mean_state_value: mean(&|e| e.mean_state_value),
            episodes,
        }
    }
}

/// Evaluates `policy` over `episodes` independent episodes. Episode `i`
/// runs on a fork of `env` seeded from `env.seed()` and `i`, so the result
/// does not depend on `exec`.
pub fn run_validation<P: Policy>(
    env: &SearchEnv,
    policy: &P,
    episodes: usize,
    exec: Execution,
) -> Result<ValidationSummary> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("validation needs at least one episode".into()));
    }
    let base = env.seed();
    let results = map_indexed(episodes, exec, |i| {
        let seed = mix_seed(base, 1000 + i as u64);
        let mut local = env.fork(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 3));
        run_episode(&mut local, policy, &mut rng)
    });
    let episodes = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ValidationSummary::from_episodes(episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::Asset;
    use crate::usersim::HistoryKey;
    use AgentAction as A;
    use UserAction as U;

    fn catalog() -> Arc<Catalog> {
        Arc::new(
            Catalog::load([
                Asset::new("a1", ["car", "city"]),
                Asset::new("a2", ["car", "sporty"]),
                Asset::new("a3", ["car", "city", "night"]),
                Asset::new("a4", ["nature", "mountain"]),
                Asset::new("a5", ["nature", "lake"]),
            ])
            .unwrap(),
        )
    }

    fn table() -> Arc<ConditionalTable> {
        Arc::new(
            ConditionalTable::build(&[
                vec![
                    U::NewQuery,
                    U::ClickResult,
                    U::RefineQuery,
                    U::AddToCart,
                    U::DownloadOrPurchase,
                    U::EndConversation,
                ],
                vec![U::NewQuery, U::RequestMore, U::ClusterCategoryClick, U::SearchSimilar, U::EndConversation],
                vec![U::NewQuery, U::RefineQuery, U::ClickResult, U::EndConversation],
            ])
            .unwrap(),
        )
    }

    fn env(cfg: EnvConfig, seed: u64) -> SearchEnv {
        SearchEnv::new(cfg, catalog(), table(), Arc::new(CompliancePolicy::default()), seed).unwrap()
    }

    /// Table that always answers `next` regardless of history.
    fn forced_env(next: U, cfg: EnvConfig) -> SearchEnv {
        let t = ConditionalTable::build(&[vec![next]]).unwrap();
        assert!(t.get(&HistoryKey::from_history(&[None; 3])).is_some());
        SearchEnv::new(cfg, catalog(), Arc::new(t), Arc::new(CompliancePolicy::identity()), 1).unwrap()
    }

    #[test]
    fn feedback_rules() {
        assert_eq!(feedback_category(A::ProbeToRefine, U::RefineQuery, None), FeedbackCategory::Good);
        assert_eq!(feedback_category(A::ProbeToRefine, U::EndConversation, None), FeedbackCategory::Bad);
        assert_eq!(feedback_category(A::ShowResults, U::ClickResult, None), FeedbackCategory::Good);
        assert_eq!(feedback_category(A::ShowResults, U::RefineQuery, None), FeedbackCategory::Average);
        assert_eq!(feedback_category(A::Salutation, U::EndConversation, None), FeedbackCategory::Average);
        assert_eq!(
            feedback_category(A::ProbeToRefine, U::RefineQuery, Some(A::ProbeToRefine)),
            FeedbackCategory::Average
        );
        assert_eq!(feedback_category(A::ShowResults, U::ClickResult, Some(A::ShowResults)), FeedbackCategory::Good);
    }

    #[test]
    fn reset_contract() {
        let mut e = env(EnvConfig::default(), 9);
        let s = e.reset();
        assert!(s.history_agent.is_empty());
        assert_eq!(s.history_user, vec![U::NewQuery]);
        assert_eq!(s.length_conv, 1);
        let page = e.catalog().search(e.current_query(), 0).unwrap();
        assert_eq!(s.score_results, discretize_scores(&page.padded_scores()).unwrap());

        let mut e2 = env(EnvConfig::default(), 9);
        assert_eq!(e2.reset(), s);
    }

    #[test]
    fn refine_after_probe_is_good() {
        let mut e = forced_env(U::RefineQuery, EnvConfig::default());
        e.reset();
        let out = e.step(A::ProbeToRefine).unwrap();
        assert_eq!(out.feedback, FeedbackCategory::Good);
        assert_eq!(out.reward.extrinsic, 1.0);
        let out = e.step(A::ShowResults).unwrap();
        assert_eq!(out.feedback, FeedbackCategory::Average);
        assert_eq!(out.reward.extrinsic, 0.3);
        assert_eq!(e.state().length_conv, 3);
    }

    #[test]
    fn end_without_completion() {
        let mut e = forced_env(U::EndConversation, EnvConfig::default());
        e.reset();
        let out = e.step(A::ShowResults).unwrap();
        assert!(out.done);
        assert_eq!(out.reward.task_completion, 0.0);
        assert!(matches!(e.step(A::ShowResults), Err(Error::EpisodeDone)));
    }

    #[test]
    fn completion_paid_once_at_end() {
        let cfg = EnvConfig { max_turns: 3, ..Default::default() };
        let mut e = forced_env(U::DownloadOrPurchase, cfg);
        e.reset();
        let r1 = e.step(A::AskToDownload).unwrap();
        let r2 = e.step(A::AskToDownload).unwrap();
        let r3 = e.step(A::ShowResults).unwrap();
        assert_eq!(r1.reward.task_completion, 0.0);
        assert_eq!(r2.reward.task_completion, 0.0);
        assert_eq!(r2.feedback, FeedbackCategory::Average);
        assert!(r3.done);
        assert_eq!(r3.reward.task_completion, 10.0);
        assert_eq!(e.turns(), 3);
    }

    #[test]
    fn sign_up_paid_once() {
        let mut policy = CompliancePolicy::identity();
        policy.sign_up_probability = 1.0;
        let t = Arc::new(ConditionalTable::build(&[vec![U::ClickResult]]).unwrap());
        let mut e = SearchEnv::new(EnvConfig::default(), catalog(), t, Arc::new(policy), 3).unwrap();
        e.reset();
        let first = e.step(A::SignUpPrompt).unwrap();
        let second = e.step(A::SignUpPrompt).unwrap();
        assert_eq!(first.reward.auxiliary, 0.2 + 1.0);
        assert_eq!(first.feedback, FeedbackCategory::Good);
        assert_eq!(second.reward.auxiliary, 0.2);
        assert!(e.counters().sign_up);
        assert_eq!(e.counters().click_result, 2);
    }

    #[test]
    fn episode_invariants_under_random_play() {
        let cfg = EnvConfig { max_turns: 20, ..Default::default() };
        let mut e = env(cfg, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            e.reset();
            let mut prev = e.counters();
            loop {
                let a = A::ALL[rng.random_range(0..12)];
                let out = e.step(a).unwrap();
                let r = out.reward;
                assert_eq!(r.total, r.extrinsic + r.auxiliary + r.task_completion);
                if !out.done {
                    assert_eq!(r.task_completion, 0.0);
                }
                let c = e.counters();
                assert!(c.click_result >= prev.click_result);
                assert!(c.add_to_cart >= prev.add_to_cart);
                assert!(c.cluster_click >= prev.cluster_click);
                assert!(c.sign_up >= prev.sign_up);
                prev = c;
                out.next_state.validate().unwrap();
                assert_eq!(out.done, out.user_action == U::EndConversation || e.turns() >= 20);
                if out.done {
                    break;
                }
            }
            assert!(e.turns() <= 20);
            assert!(e.is_done());
        }
    }

    #[test]
    fn zero_rewards_give_zero_returns() {
        let cfg = EnvConfig { rewards: RewardConfig::zero(), ..Default::default() };
        let e = env(cfg, 2);
        let summary = run_validation(&e, &RandomPolicy, 30, Execution::Sequential).unwrap();
        assert!(summary.episodes.iter().all(|m| m.total_reward == 0.0));
    }

    #[test]
    fn validation_with_degenerate_policy() {
        let e = env(EnvConfig::default(), 5);
        let s = run_validation(&e, &FixedPolicy(A::Salutation), 20, Execution::Sequential).unwrap();
        assert!(s.mean_reward.is_finite() && s.mean_state_value.is_finite());
        assert!(s.episodes.iter().all(|m| m.num_turns <= DEFAULT_MAX_TURNS));
        assert!(run_validation(&e, &RandomPolicy, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn validation_is_reproducible_and_mode_independent() {
        let e = env(EnvConfig::default(), 8);
        let a = run_validation(&e, &RandomPolicy, 64, Execution::Sequential).unwrap();
        let b = run_validation(&e, &RandomPolicy, 64, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_export() {
        let mut e = forced_env(U::EndConversation, EnvConfig::default());
        e.enable_trace();
        e.reset();
        e.step(A::ProbeUseCase).unwrap();
        let trace = e.take_trace();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].feedback, FeedbackCategory::Bad);
        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &trace).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let back: TraceRecord = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(back, trace[0]);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = EnvConfig { max_turns: 0, ..Default::default() };
        assert!(SearchEnv::new(cfg, catalog(), table(), Arc::new(CompliancePolicy::default()), 0).is_err());
    }
}

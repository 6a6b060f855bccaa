//! Action enumerations, the structured search state, its fixed-width
//! encoding, and the reward configuration shared by every other module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of most recent turns kept in each action history.
pub const HISTORY_LEN: usize = 10;
/// Number of relevance-score slots (one result page).
pub const SCORE_SLOTS: usize = 10;
/// Conversation length at which the normalized length feature saturates.
pub const LENGTH_CAP: u32 = 50;
/// Number of score bins used by [`discretize_scores`].
pub const SCORE_BINS: usize = 5;

pub const NUM_USER_ACTIONS: usize = 9;
pub const NUM_AGENT_ACTIONS: usize = 12;

const USER_BLOCK: usize = HISTORY_LEN * NUM_USER_ACTIONS;
const AGENT_BLOCK: usize = HISTORY_LEN * NUM_AGENT_ACTIONS;

/// Width of an encoded state: 90 + 120 + 10 + 1.
pub const STATE_DIM: usize = USER_BLOCK + AGENT_BLOCK + SCORE_SLOTS + 1;

macro_rules! action_enum {
    (
        $(#[$meta:meta])*
        $name:ident, $count:expr, [$($variant:ident => $label:literal),+ $(,)?]
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: [$name; $count] = [$($name::$variant),+];
            pub const COUNT: usize = $count;

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($label => Ok($name::$variant),)+
                    other => Err(Error::UnknownAction(other.to_string())),
                }
            }
        }
    };
}

action_enum!(
    /// Agent actions in canonical order: the three probe-intent actions
    /// followed by the nine general actions.
    AgentAction, 12, [
        ProbeUseCase => "probe_use_case",
        ProbeToRefine => "probe_to_refine",
        ClusterCategories => "cluster_categories",
        ShowResults => "show_results",
        AddToCartPrompt => "add_to_cart_prompt",
        AskToDownload => "ask_to_download",
        AskToPurchase => "ask_to_purchase",
        ProvideDiscount => "provide_discount",
        SignUpPrompt => "sign_up_prompt",
        AskFeedback => "ask_feedback",
        ProvideHelp => "provide_help",
        Salutation => "salutation",
    ]
);

action_enum!(
    /// User actions in canonical order.
    UserAction, 9, [
        NewQuery => "new_query",
        RefineQuery => "refine_query",
        RequestMore => "request_more",
        ClickResult => "click_result",
        AddToCart => "add_to_cart",
        ClusterCategoryClick => "cluster_category_click",
        SearchSimilar => "search_similar",
        DownloadOrPurchase => "download_or_purchase",
        EndConversation => "end_conversation",
    ]
);

impl AgentAction {
    /// Probe-intent actions ask the user for context instead of delivering results.
    pub fn is_probe(self) -> bool {
        matches!(self, AgentAction::ProbeUseCase | AgentAction::ProbeToRefine | AgentAction::ClusterCategories)
    }

    /// Actions that ask the user to do something specific.
    pub fn is_prompt(self) -> bool {
        self.is_probe()
            || matches!(
                self,
                AgentAction::AddToCartPrompt
                    | AgentAction::AskToDownload
                    | AgentAction::AskToPurchase
                    | AgentAction::ProvideDiscount
                    | AgentAction::SignUpPrompt
                    | AgentAction::AskFeedback
            )
    }
}

impl UserAction {
    /// Actions that carry a search query.
    pub fn carries_query(self) -> bool {
        matches!(self, UserAction::NewQuery | UserAction::RefineQuery | UserAction::SearchSimilar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackCategory {
    Bad,
    Average,
    Good,
}

/// Structured conversation state observed by the agent at each turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    /// Most recent last; includes the user action awaiting a response.
    pub history_user: Vec<UserAction>,
    pub history_agent: Vec<AgentAction>,
    pub score_results: [f64; SCORE_SLOTS],
    /// Number of user turns so far.
    pub length_conv: u32,
}

impl Default for SearchState {
    fn default() -> Self {
        Self { history_user: Vec::new(), history_agent: Vec::new(), score_results: [0.0; SCORE_SLOTS], length_conv: 0 }
    }
}

impl SearchState {
    pub fn validate(&self) -> Result<()> {
        for len in [self.history_user.len(), self.history_agent.len()] {
            if len > HISTORY_LEN {
                return Err(Error::HistoryTooLong { len, max: HISTORY_LEN });
            }
        }
        for &s in &self.score_results {
            check_score(s)?;
        }
        Ok(())
    }

    /// Appends to a bounded history, dropping the oldest entry when full.
    pub fn push_user(&mut self, action: UserAction) {
        push_bounded(&mut self.history_user, action);
    }

    pub fn push_agent(&mut self, action: AgentAction) {
        push_bounded(&mut self.history_agent, action);
    }

    pub fn mean_score(&self) -> f64 {
        self.score_results.iter().sum::<f64>() / SCORE_SLOTS as f64
    }
}

fn push_bounded<T>(history: &mut Vec<T>, item: T) {
    if history.len() == HISTORY_LEN {
        history.remove(0);
    }
    history.push(item);
}

fn check_score(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::ScoreOutOfRange(s))
    }
}

/// Fixed-width numeric encoding of a [`SearchState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.len() != STATE_DIM {
            return Err(Error::Shape(format!("state vector has {} entries, expected {STATE_DIM}", values.len())));
        }
        Ok(Self(values))
    }

    pub fn user_block(&self) -> &[f64] {
        &self.0[..USER_BLOCK]
    }

    pub fn agent_block(&self) -> &[f64] {
        &self.0[USER_BLOCK..USER_BLOCK + AGENT_BLOCK]
    }

    pub fn score_block(&self) -> &[f64] {
        &self.0[USER_BLOCK + AGENT_BLOCK..STATE_DIM - 1]
    }

    pub fn length_feature(&self) -> f64 {
        self.0[STATE_DIM - 1]
    }
}

/// Which parts of the state enter the encoding. Dropping the history
/// blocks leaves them zeroed so the vector width stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Full,
    NoHistory,
}

pub fn encode_state(s: &SearchState) -> Result<StateVector> {
    encode_state_with(s, Encoding::Full)
}

pub fn encode_state_with(s: &SearchState, encoding: Encoding) -> Result<StateVector> {
    s.validate()?;
    let mut v = vec![0.0; STATE_DIM];
    if encoding == Encoding::Full {
        // Left padding: the most recent action sits in slot HISTORY_LEN - 1.
        let pad = HISTORY_LEN - s.history_user.len();
        for (i, a) in s.history_user.iter().enumerate() {
            v[(pad + i) * NUM_USER_ACTIONS + a.index()] = 1.0;
        }
        let pad = HISTORY_LEN - s.history_agent.len();
        for (i, a) in s.history_agent.iter().enumerate() {
            v[USER_BLOCK + (pad + i) * NUM_AGENT_ACTIONS + a.index()] = 1.0;
        }
    }
    let bins = discretize_scores(&s.score_results)?;
    v[USER_BLOCK + AGENT_BLOCK..STATE_DIM - 1].copy_from_slice(&bins);
    v[STATE_DIM - 1] = f64::from(s.length_conv.min(LENGTH_CAP)) / f64::from(LENGTH_CAP);
    Ok(StateVector(v))
}

/// Bin index in `0..SCORE_BINS` for a score in [0, 1].
pub fn score_bin(score: f64) -> usize {
    ((score * SCORE_BINS as f64).floor() as usize).min(SCORE_BINS - 1)
}

pub fn discretize_score(score: f64) -> Result<f64> {
    check_score(score)?;
    Ok(score_bin(score) as f64 / (SCORE_BINS - 1) as f64)
}

pub fn discretize_scores(scores: &[f64]) -> Result<[f64; SCORE_SLOTS]> {
    if scores.len() != SCORE_SLOTS {
        return Err(Error::ScoreCount { expected: SCORE_SLOTS, got: scores.len() });
    }
    let mut out = [0.0; SCORE_SLOTS];
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = discretize_score(s)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicRewards {
    pub good: f64,
    pub average: f64,
    pub bad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryWeights {
    pub click_result: f64,
    pub add_to_cart: f64,
    pub cluster_click: f64,
    /// Paid at most once per episode.
    pub sign_up: f64,
}

/// Reward magnitudes in reward points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub task_completion: f64,
    pub extrinsic: ExtrinsicRewards,
    pub auxiliary: AuxiliaryWeights,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            task_completion: 10.0,
            extrinsic: ExtrinsicRewards { good: 1.0, average: 0.3, bad: -1.0 },
            auxiliary: AuxiliaryWeights { click_result: 0.2, add_to_cart: 0.5, cluster_click: 0.3, sign_up: 1.0 },
        }
    }
}

impl RewardConfig {
    /// All weights zero. Skips the ordering invariant; used for degenerate
    /// environments in tests and experiments.
    pub fn zero() -> Self {
        Self {
            task_completion: 0.0,
            extrinsic: ExtrinsicRewards { good: 0.0, average: 0.0, bad: 0.0 },
            auxiliary: AuxiliaryWeights { click_result: 0.0, add_to_cart: 0.0, cluster_click: 0.0, sign_up: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.extrinsic;
        if !(e.good > e.average && e.average > e.bad) {
            return Err(Error::InvalidConfig("extrinsic rewards must satisfy good > average > bad".into()));
        }
        if self.task_completion <= 0.0 {
            return Err(Error::InvalidConfig("task_completion must be positive".into()));
        }
        Ok(())
    }

    pub fn extrinsic(&self, category: FeedbackCategory) -> f64 {
        match category {
            FeedbackCategory::Good => self.extrinsic.good,
            FeedbackCategory::Average => self.extrinsic.average,
            FeedbackCategory::Bad => self.extrinsic.bad,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reward config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub extrinsic: f64,
    pub auxiliary: f64,
    pub task_completion: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(extrinsic: f64, auxiliary: f64, task_completion: f64) -> Self {
        Self { extrinsic, auxiliary, task_completion, total: extrinsic + auxiliary + task_completion }
    }
}

/// Episode return: the completion term plus every turn's extrinsic and
/// auxiliary rewards.
pub fn total_reward(breakdowns: &[RewardBreakdown], task_completion: f64) -> f64 {
    task_completion + breakdowns.iter().map(|b| b.extrinsic + b.auxiliary).sum::<f64>()
}

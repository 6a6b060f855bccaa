//! Asynchronous advantage actor-critic over the LSTM policy in [`crate::neural`].
//!
//! Each worker owns an environment fork and a private parameter replica. It
//! repeatedly copies the global parameters, collects an n-step rollout,
//! computes the loss gradient on its replica and applies it to the global
//! store under a lock, where Adam runs.

use std::sync::mpsc;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{encode_state_with, Encoding, SearchState, STATE_DIM};
use crate::env::{run_validation, Decision, Policy, SearchEnv, ValidationSummary};
use crate::error::{Error, Result};
use crate::neural::{
    backward_sequence, clip_global_norm, forward_step, softmax, AdamState, ForwardCache, HiddenState, Logits,
    PolicyParams, SequenceLoss, NUM_ACTIONS,
};
use crate::par::{map_indexed, mix_seed, Execution};

/// Floor applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A3CConfig {
    pub gamma: f64,
    /// Rollout length.
    pub n: usize,
    pub hidden: usize,
    pub c_value: f64,
    pub c_entropy: f64,
    pub workers: usize,
    pub episodes_per_worker: usize,
    pub validation_episodes: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub encoding: Encoding,
    pub seed: u64,
}

impl Default for A3CConfig {
    fn default() -> Self {
        Self {
            gamma: 0.90,
            n: 10,
            hidden: 250,
            c_value: 0.5,
            c_entropy: 0.01,
            workers: 10,
            episodes_per_worker: 350,
            validation_episodes: 5,
            learning_rate: 3e-3,
            clip_norm: 40.0,
            encoding: Encoding::Full,
            seed: 0,
        }
    }
}

impl A3CConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if self.n == 0 {
            return bad("rollout length n must be at least 1".into());
        }
        if self.hidden == 0 {
            return bad("lstm size must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.episodes_per_worker == 0 || self.validation_episodes == 0 {
            return bad("episode counts must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if !(self.c_value >= 0.0 && self.c_entropy >= 0.0) {
            return bad("loss coefficients must be non-negative".into());
        }
        Ok(())
    }

    pub fn coeffs(&self) -> LossCoeffs {
        LossCoeffs { value: self.c_value, entropy: self.c_entropy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoeffs {
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossCoeffs {
    fn default() -> Self {
        Self { value: 0.5, entropy: 0.01 }
    }
}

/// Up to `n` transitions collected with one parameter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub cache: ForwardCache,
    /// Hidden state the rollout started from.
    pub initial: HiddenState,
    /// `V(s_{t+n})`, or 0 when `terminal`.
    pub bootstrap: f64,
    pub terminal: bool,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Discounted n-step targets by backward recursion `R ← r_i + γR`, seeded
/// with `bootstrap`, and advantages `target_i − value_i`.
pub fn n_step_targets(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut targets = vec![0.0; rewards.len()];
    let mut ret = bootstrap;
    for i in (0..rewards.len()).rev() {
        ret = rewards[i] + gamma * ret;
        targets[i] = ret;
    }
    let advantages = targets.iter().zip(values).map(|(t, v)| t - v).collect();
    (targets, advantages)
}

pub fn compute_targets(rollout: &Rollout, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let bootstrap = if rollout.terminal { 0.0 } else { rollout.bootstrap };
    n_step_targets(&rollout.rewards, &rollout.values, bootstrap, gamma)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub policy: f64,
    pub value: f64,
    /// Sum over steps of `Σ_a p log p`.
    pub entropy: f64,
    pub total: f64,
}

/// `Σ_a p log p` for one distribution, in `[−ln 12, 0]` for 12 actions.
pub fn neg_entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum()
}

pub fn compute_losses(
    actions: &[usize],
    probs: &[Logits],
    values: &[f64],
    targets: &[f64],
    advantages: &[f64],
    coeffs: LossCoeffs,
) -> Result<Losses> {
    let n = actions.len();
    if probs.len() != n || values.len() != n || targets.len() != n || advantages.len() != n {
        return Err(Error::Shape("loss inputs have different lengths".into()));
    }
    let mut l = Losses::default();
    for i in 0..n {
        let a = actions[i];
        if a >= NUM_ACTIONS {
            return Err(Error::UnknownAction(format!("index {a}")));
        }
        l.policy -= probs[i][a].max(LOG_CLAMP).ln() * advantages[i];
        l.value += (targets[i] - values[i]).powi(2);
        l.entropy += neg_entropy(&probs[i]);
    }
    l.total = l.policy + coeffs.value * l.value + coeffs.entropy * l.entropy;
    Ok(l)
}

/// The total loss as a function of logits and values, with targets and
/// advantages held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct A3CLoss {
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
    pub advantages: Vec<f64>,
    pub coeffs: LossCoeffs,
}

impl A3CLoss {
    pub fn for_rollout(rollout: &Rollout, gamma: f64, coeffs: LossCoeffs) -> Self {
        let (targets, advantages) = compute_targets(rollout, gamma);
        Self { actions: rollout.actions.clone(), targets, advantages, coeffs }
    }

    fn probs(logits: &[Logits]) -> Vec<Logits> {
        logits
            .iter()
            .map(|l| {
                let p = softmax(l).expect("finite logits");
                std::array::from_fn(|k| p[k])
            })
            .collect()
    }

    pub fn breakdown(&self, logits: &[Logits], values: &[f64]) -> Losses {
        compute_losses(&self.actions, &Self::probs(logits), values, &self.targets, &self.advantages, self.coeffs)
            .expect("aligned rollout")
    }
}

impl SequenceLoss for A3CLoss {
    fn loss(&self, logits: &[Logits], values: &[f64]) -> f64 {
        self.breakdown(logits, values).total
    }

    fn grad(&self, logits: &[Logits], values: &[f64]) -> (Vec<Logits>, Vec<f64>) {
        let probs = Self::probs(logits);
        let mut d_logits = Vec::with_capacity(probs.len());
        let mut d_values = Vec::with_capacity(probs.len());
        for (i, p) in probs.iter().enumerate() {
            let a = self.actions[i];
            let adv = self.advantages[i];
            let e = neg_entropy(p);
            let clamped = p[a] < LOG_CLAMP;
            let d: Logits = std::array::from_fn(|j| {
                let onehot = if j == a { 1.0 } else { 0.0 };
                let policy = if clamped { 0.0 } else { -adv * (onehot - p[j]) };
                let entropy = if p[j] > 0.0 { p[j] * (p[j].ln() - e) } else { 0.0 };
                policy + self.coeffs.entropy * entropy
            });
            d_logits.push(d);
            d_values.push(-2.0 * self.coeffs.value * (self.targets[i] - values[i]));
        }
        (d_logits, d_values)
    }
}

/// Draws an index from `probs` by inverse CDF.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn encode(state: &SearchState, encoding: Encoding) -> Vec<f64> {
    encode_state_with(state, encoding).expect("environment states are valid").into_inner()
}

/// Runs up to `n` steps from the environment's current state, sampling
/// actions from the policy. Returns the rollout, the hidden state after its
/// last step, and whether the episode ended.
pub fn collect_rollout<R: Rng>(
    env: &mut SearchEnv,
    params: &PolicyParams,
    hidden: HiddenState,
    n: usize,
    encoding: Encoding,
    rng: &mut R,
) -> Result<(Rollout, HiddenState, bool)> {
    if env.is_done() {
        return Err(Error::EpisodeDone);
    }
    let initial = hidden.clone();
    let mut hs = hidden;
    let mut cache = ForwardCache::default();
    let (mut actions, mut rewards) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut done = false;
    for _ in 0..n {
        let x = encode(env.state(), encoding);
        let (next, step, out) = forward_step(params, &x, &hs)?;
        let a = sample_index(&out.probs, rng);
        let outcome = env.step(crate::domain::AgentAction::ALL[a])?;
        cache.steps.push(step);
        cache.logits.push(out.logits);
        cache.probs.push(out.probs);
        cache.values.push(out.value);
        actions.push(a);
        rewards.push(outcome.reward.total);
        hs = next;
        if outcome.done {
            done = true;
            break;
        }
    }
    let bootstrap = if done { 0.0 } else { forward_step(params, &encode(env.state(), encoding), &hs)?.2.value };
    let values = cache.values.clone();
    let rollout = Rollout { actions, rewards, values, cache, initial, bootstrap, terminal: done };
    Ok((rollout, hs, done))
}

/// Loss and parameter gradient for a rollout collected with `params`.
pub fn rollout_gradient(
    params: &PolicyParams,
    rollout: &Rollout,
    gamma: f64,
    coeffs: LossCoeffs,
) -> Result<(Losses, PolicyParams)> {
    let loss = A3CLoss::for_rollout(rollout, gamma, coeffs);
    let losses = loss.breakdown(&rollout.cache.logits, &rollout.cache.values);
    let (dl, dv) = loss.grad(&rollout.cache.logits, &rollout.cache.values);
    let grads = backward_sequence(params, &rollout.cache, &dl, &dv)?;
    Ok((losses, grads))
}

struct StoreInner {
    params: PolicyParams,
    adam: AdamState,
    version: u64,
}

/// Master parameters with their Adam state. Snapshots and gradient
/// applications are serialized by one lock.
pub struct GlobalParamStore {
    inner: Mutex<StoreInner>,
    clip_norm: f64,
}

impl GlobalParamStore {
    pub fn new(params: PolicyParams, learning_rate: f64, clip_norm: f64) -> Self {
        let adam = AdamState::new(&params, learning_rate);
        Self { inner: Mutex::new(StoreInner { params, adam, version: 0 }), clip_norm }
    }

    pub fn snapshot(&self) -> (PolicyParams, u64) {
        let g = self.inner.lock();
        (g.params.clone(), g.version)
    }

    /// Copies the master parameters into `local`, reusing its buffers.
    pub fn snapshot_into(&self, local: &mut PolicyParams) -> u64 {
        let g = self.inner.lock();
        local.clone_from(&g.params);
        g.version
    }

    /// Clips, applies one Adam step and returns the new version.
    pub fn apply(&self, mut grads: PolicyParams) -> Result<u64> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        clip_global_norm(&mut grads, self.clip_norm);
        let mut g = self.inner.lock();
        let StoreInner { params, adam, version } = &mut *g;
        crate::neural::adam_step(params, &grads, adam)?;
        *version += 1;
        Ok(*version)
    }

    pub fn version(&self) -> u64 {
        self.inner.lock().version
    }

    pub fn into_params(self) -> PolicyParams {
        self.inner.into_inner().params
    }
}

/// Recurrent policy for evaluation; samples unless `greedy`.
#[derive(Debug, Clone)]
pub struct LstmPolicy<'a> {
    pub params: &'a PolicyParams,
    pub encoding: Encoding,
    pub greedy: bool,
}

impl Policy for LstmPolicy<'_> {
    type Episode = HiddenState;

    fn begin_episode(&self) -> HiddenState {
        HiddenState::zeros(self.params.hidden_size())
    }

    fn act(&self, hidden: &mut HiddenState, state: &SearchState, rng: &mut ChaCha8Rng) -> Decision {
        let x = encode(state, self.encoding);
        let (next, _, out) = forward_step(self.params, &x, hidden).expect("policy shapes were validated");
        *hidden = next;
        let a = if self.greedy { crate::qagent::argmax(&out.probs) } else { sample_index(&out.probs, rng) };
        Decision { action: crate::domain::AgentAction::ALL[a], value: out.value }
    }
}

/// Validation with sampled actions; never touches `params`.
pub fn evaluate(
    params: &PolicyParams,
    env: &SearchEnv,
    episodes: usize,
    encoding: Encoding,
    exec: Execution,
) -> Result<ValidationSummary> {
    check_input(params)?;
    run_validation(env, &LstmPolicy { params, encoding, greedy: false }, episodes, exec)
}

fn check_input(params: &PolicyParams) -> Result<()> {
    params.check()?;
    if params.input_size() != STATE_DIM {
        return Err(Error::Shape(format!("policy input {} != {STATE_DIM}", params.input_size())));
    }
    Ok(())
}

/// One validation run, as written to the metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Training episode index within the worker.
    pub episode: usize,
    pub worker: usize,
    pub avg_reward: f64,
    pub mean_state_value: f64,
    /// Mean validation episode length.
    pub length: f64,
    /// Fraction of validation episodes that completed the task.
    pub completed: f64,
}

impl MetricRow {
    pub fn from_summary(episode: usize, worker: usize, s: &ValidationSummary) -> Self {
        Self {
            episode,
            worker,
            avg_reward: s.mean_reward,
            mean_state_value: s.mean_state_value,
            length: s.mean_length,
            completed: s.completion_rate,
        }
    }
}

/// Validation rows in the order they were produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub count: usize,
    pub reward_mean: f64,
    pub reward_variance: f64,
    pub mean_state_value: f64,
    pub completion_rate: f64,
}

impl TrainMetrics {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn stats<'a>(rows: impl Iterator<Item = &'a MetricRow>) -> WindowStats {
        let rows: Vec<&MetricRow> = rows.collect();
        let n = rows.len().max(1) as f64;
        let reward_mean = rows.iter().map(|r| r.avg_reward).sum::<f64>() / n;
        let reward_variance = rows.iter().map(|r| (r.avg_reward - reward_mean).powi(2)).sum::<f64>() / n;
        WindowStats {
            count: rows.len(),
            reward_mean,
            reward_variance,
            mean_state_value: rows.iter().map(|r| r.mean_state_value).sum::<f64>() / n,
            completion_rate: rows.iter().map(|r| r.completed).sum::<f64>() / n,
        }
    }

    /// Statistics over rows whose episode index is at least `warmup`.
    pub fn after_warmup(&self, warmup: usize) -> WindowStats {
        Self::stats(self.rows.iter().filter(|r| r.episode >= warmup))
    }

    /// Statistics over the last `n` rows produced.
    pub fn last(&self, n: usize) -> WindowStats {
        Self::stats(self.rows[self.rows.len().saturating_sub(n)..].iter())
    }
}

pub struct A3CRun {
    pub params: PolicyParams,
    pub metrics: TrainMetrics,
    pub updates: u64,
}

/// Runs one worker to completion, sending a row per validation.
pub fn worker_loop(
    worker: usize,
    store: &GlobalParamStore,
    mut env: SearchEnv,
    validation_env: &SearchEnv,
    cfg: &A3CConfig,
    rows: &mpsc::Sender<MetricRow>,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 500 + worker as u64));
    let (mut local, _) = store.snapshot();
    let coeffs = cfg.coeffs();
    for episode in 0..cfg.episodes_per_worker {
        env.reset();
        let mut hidden = HiddenState::zeros(cfg.hidden);
        loop {
            store.snapshot_into(&mut local);
            let (rollout, next, done) = collect_rollout(&mut env, &local, hidden, cfg.n, cfg.encoding, &mut rng)?;
            let (_, grads) = rollout_gradient(&local, &rollout, cfg.gamma, coeffs)?;
            store.apply(grads)?;
            hidden = next;
            if done {
                break;
            }
        }
        store.snapshot_into(&mut local);
        // Every validation round sees fresh episodes.
        let round = validation_env.fork(mix_seed(validation_env.seed(), ((worker as u64) << 32) | episode as u64));
        let summary = evaluate(&local, &round, cfg.validation_episodes, cfg.encoding, Execution::Sequential)?;
        // The receiver only disappears when training is being torn down.
        let _ = rows.send(MetricRow::from_summary(episode, worker, &summary));
    }
    Ok(())
}

pub fn train_a3c(cfg: &A3CConfig, env: &SearchEnv) -> Result<A3CRun> {
    train_a3c_with(cfg, env, |_| {})
}

/// As [`train_a3c`], calling `on_row` on the calling thread for every
/// validation row as it arrives.
pub fn train_a3c_with(cfg: &A3CConfig, env: &SearchEnv, mut on_row: impl FnMut(&MetricRow)) -> Result<A3CRun> {
    cfg.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 1));
    let params = PolicyParams::init(STATE_DIM, cfg.hidden, &mut init_rng);
    let store = GlobalParamStore::new(params, cfg.learning_rate, cfg.clip_norm);
    let validation_env = env.fork(mix_seed(cfg.seed, 2));
    let (tx, rx) = mpsc::channel();
    let mut metrics = TrainMetrics::default();
    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|w| {
                let tx = tx.clone();
                let worker_env = env.fork(mix_seed(cfg.seed, 100 + w as u64));
                let (store, validation_env) = (&store, &validation_env);
                scope.spawn(move || worker_loop(w, store, worker_env, validation_env, cfg, &tx))
            })
            .collect();
        drop(tx);
        for row in rx {
            on_row(&row);
            metrics.rows.push(row);
        }
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    let updates = store.version();
    Ok(A3CRun { params: store.into_params(), metrics, updates })
}

/// One cell of a hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub gamma: f64,
    pub hidden: usize,
    pub encoding: Encoding,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cell: SweepCell,
    pub metrics: TrainMetrics,
    pub window: WindowStats,
}

/// Cartesian product of the grid axes, seeds varying fastest.
pub fn sweep_grid(gammas: &[f64], hiddens: &[usize], encodings: &[Encoding], seeds: &[u64]) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &gamma in gammas {
        for &hidden in hiddens {
            for &encoding in encodings {
                for &seed in seeds {
                    cells.push(SweepCell { gamma, hidden, encoding, seed });
                }
            }
        }
    }
    cells
}

/// Trains every cell from `base` with the cell's overrides; cells run
/// concurrently under `exec`. Window statistics skip the first `warmup`
/// episodes of each worker.
pub fn run_sweep(
    base: &A3CConfig,
    env: &SearchEnv,
    cells: &[SweepCell],
    warmup: usize,
    exec: Execution,
) -> Result<Vec<SweepResult>> {
    if cells.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let results = map_indexed(cells.len(), exec, |i| {
        let cell = &cells[i];
        let cfg = A3CConfig {
            gamma: cell.gamma,
            hidden: cell.hidden,
            encoding: cell.encoding,
            seed: cell.seed,
            ..base.clone()
        };
        let run = train_a3c(&cfg, &env.fork(mix_seed(cell.seed, 77)))?;
        let window = run.metrics.after_warmup(warmup);
        Ok(SweepResult { cell: cell.clone(), metrics: run.metrics, window })
    });
    results.into_iter().collect()
}

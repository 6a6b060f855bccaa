//! Single-layer LSTM with linear policy and value heads, backpropagation
//! through time, Adam, and a central finite-difference gradient checker.
//!
//! Weight layouts are input-major so that sparse one-hot inputs only touch
//! the rows of their non-zero entries:
//!
//! * `w_x`: `input × 4H`, `w_h`: `H × 4H`, `b`: `4H`, gate blocks ordered
//!   input, forget, cell, output.
//! * `w_p`: `12 × H`, `b_p`: `12`, `w_v`: `H`, `b_v`: `1`.

use std::fs;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Encoding, NUM_AGENT_ACTIONS, STATE_DIM};
use crate::error::{Error, Result};

pub const NUM_ACTIONS: usize = NUM_AGENT_ACTIONS;
pub type Logits = [f64; NUM_ACTIONS];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Cell,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w_x: vec![0.0; input * 4 * hidden],
            w_h: vec![0.0; hidden * 4 * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Columns of a gate within one `4H` row.
    pub fn gate_range(&self, gate: Gate) -> Range<usize> {
        let h = self.hidden;
        let k = gate as usize;
        k * h..(k + 1) * h
    }

    fn check(&self) -> Result<()> {
        let (i, h) = (self.input, self.hidden);
        if self.w_x.len() != i * 4 * h || self.w_h.len() != h * 4 * h || self.b.len() != 4 * h {
            return Err(Error::Shape(format!("lstm tensors inconsistent with input {i}, hidden {h}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub hidden: usize,
    pub w_p: Vec<f64>,
    pub b_p: Vec<f64>,
    pub w_v: Vec<f64>,
    pub b_v: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            w_p: vec![0.0; NUM_ACTIONS * hidden],
            b_p: vec![0.0; NUM_ACTIONS],
            w_v: vec![0.0; hidden],
            b_v: vec![0.0],
        }
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden;
        if self.w_p.len() != NUM_ACTIONS * h
            || self.b_p.len() != NUM_ACTIONS
            || self.w_v.len() != h
            || self.b_v.len() != 1
        {
            return Err(Error::Shape(format!("head tensors inconsistent with hidden {h}")));
        }
        Ok(())
    }
}

/// All trainable parameters. Also used as the gradient and Adam-moment
/// container.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub lstm: LstmParams,
    pub heads: HeadParams,
}

pub const TENSOR_NAMES: [&str; 7] = ["lstm.w_x", "lstm.w_h", "lstm.b", "head.w_p", "head.b_p", "head.w_v", "head.b_v"];

impl PolicyParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self { lstm: LstmParams::zeros(input, hidden), heads: HeadParams::zeros(hidden) }
    }

    /// LSTM weights uniform in ±1/√H with forget bias 1; heads uniform in
    /// ±0.1/√H with zero bias so the initial policy is near uniform and
    /// initial values are near zero.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        for w in p.lstm.w_x.iter_mut().chain(p.lstm.w_h.iter_mut()).chain(p.lstm.b.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        for w in &mut p.lstm.b[hidden..2 * hidden] {
            *w = 1.0;
        }
        let head = 0.1 * bound;
        for w in p.heads.w_p.iter_mut().chain(p.heads.w_v.iter_mut()) {
            *w = rng.random_range(-head..head);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.lstm.input, self.lstm.hidden)
    }

    pub fn input_size(&self) -> usize {
        self.lstm.input
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden
    }

    pub fn check(&self) -> Result<()> {
        self.lstm.check()?;
        self.heads.check()?;
        if self.heads.hidden != self.lstm.hidden {
            return Err(Error::Shape("head and lstm hidden sizes differ".into()));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.lstm.input != other.lstm.input || self.lstm.hidden != other.lstm.hidden {
            return Err(Error::Shape(format!(
                "({}, {}) vs ({}, {})",
                self.lstm.input, self.lstm.hidden, other.lstm.input, other.lstm.hidden
            )));
        }
        self.check()?;
        other.check()
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            &self.lstm.w_x,
            &self.lstm.w_h,
            &self.lstm.b,
            &self.heads.w_p,
            &self.heads.b_p,
            &self.heads.w_v,
            &self.heads.b_v,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.lstm.w_x,
            &mut self.lstm.w_h,
            &mut self.lstm.b,
            &mut self.heads.w_p,
            &mut self.heads.b_p,
            &mut self.heads.w_v,
            &mut self.heads.b_v,
        ]
    }

    pub fn tensor_shapes(&self) -> [Vec<usize>; 7] {
        let (i, h) = (self.lstm.input, self.lstm.hidden);
        [vec![i, 4 * h], vec![h, 4 * h], vec![4 * h], vec![NUM_ACTIONS, h], vec![NUM_ACTIONS], vec![h], vec![1]]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(&mut f);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum()
    }

    /// `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Order-sensitive FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for t in self.tensors() {
            for x in t {
                for byte in x.to_bits().to_le_bytes() {
                    hash ^= u64::from(byte);
                    hash = hash.wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        hash
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_global_norm(grads: &mut PolicyParams, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.for_each_mut(|g| *g *= scale);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }

    pub fn size(&self) -> usize {
        self.h.len()
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, each `H` long: input, forget, cell candidate, output.
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
    pub logits: Vec<Logits>,
    pub probs: Vec<Logits>,
    pub values: Vec<f64>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn lstm_step(params: &LstmParams, x: &[f64], hs: &HiddenState) -> Result<(HiddenState, StepCache)> {
    let (n_in, h) = (params.input, params.hidden);
    if x.len() != n_in || hs.h.len() != h || hs.c.len() != h {
        return Err(Error::Shape(format!(
            "lstm step: input {} (want {n_in}), hidden {} (want {h})",
            x.len(),
            hs.h.len()
        )));
    }
    let width = 4 * h;
    let mut z = params.b.clone();
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            let row = &params.w_x[j * width..(j + 1) * width];
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += xj * w;
            }
        }
    }
    for (k, &hk) in hs.h.iter().enumerate() {
        if hk != 0.0 {
            let row = &params.w_h[k * width..(k + 1) * width];
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += hk * w;
            }
        }
    }
    let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..h).map(|k| f[k] * hs.c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    let next = HiddenState { h: h_new.clone(), c: c.clone() };
    let cache =
        StepCache { x: x.to_vec(), h_prev: hs.h.clone(), c_prev: hs.c.clone(), i, f, g, o, c, tanh_c, h: h_new };
    Ok((next, cache))
}

pub fn heads_forward(heads: &HeadParams, h: &[f64]) -> Result<(Logits, f64)> {
    if h.len() != heads.hidden {
        return Err(Error::Shape(format!("heads: hidden {} (want {})", h.len(), heads.hidden)));
    }
    let mut logits = [0.0; NUM_ACTIONS];
    for (a, l) in logits.iter_mut().enumerate() {
        let row = &heads.w_p[a * heads.hidden..(a + 1) * heads.hidden];
        *l = heads.b_p[a] + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
    }
    let value = heads.b_v[0] + heads.w_v.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
    Ok((logits, value))
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

fn softmax12(logits: &Logits) -> Result<Logits> {
    let p = softmax(logits)?;
    let mut out = [0.0; NUM_ACTIONS];
    out.copy_from_slice(&p);
    Ok(out)
}

/// Output of one full forward step (LSTM + heads).
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Logits,
    pub probs: Logits,
    pub value: f64,
}

pub fn forward_step(
    params: &PolicyParams,
    x: &[f64],
    hs: &HiddenState,
) -> Result<(HiddenState, StepCache, StepOutput)> {
    let (next, cache) = lstm_step(&params.lstm, x, hs)?;
    let (logits, value) = heads_forward(&params.heads, &next.h)?;
    let probs = softmax12(&logits)?;
    Ok((next, cache, StepOutput { logits, probs, value }))
}

/// Runs the network over `inputs` starting from `initial`.
pub fn forward_sequence(
    params: &PolicyParams,
    inputs: &[Vec<f64>],
    initial: &HiddenState,
) -> Result<(ForwardCache, HiddenState)> {
    let mut cache = ForwardCache::default();
    let mut hs = initial.clone();
    for x in inputs {
        let (next, step, out) = forward_step(params, x, &hs)?;
        cache.steps.push(step);
        cache.logits.push(out.logits);
        cache.probs.push(out.probs);
        cache.values.push(out.value);
        hs = next;
    }
    Ok((cache, hs))
}

/// Backpropagation through the whole cached span. The gradient flowing into
/// the span's initial hidden state is dropped (truncated BPTT).
pub fn backward_sequence(
    params: &PolicyParams,
    cache: &ForwardCache,
    d_logits: &[Logits],
    d_values: &[f64],
) -> Result<PolicyParams> {
    let n = cache.steps.len();
    if d_logits.len() != n || d_values.len() != n {
        return Err(Error::Shape(format!(
            "cache has {n} steps but got {} logit and {} value gradients",
            d_logits.len(),
            d_values.len()
        )));
    }
    params.check()?;
    let h = params.lstm.hidden;
    let width = 4 * h;
    let mut grads = params.zeros_like();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; width];

    for t in (0..n).rev() {
        let s = &cache.steps[t];
        if s.x.len() != params.lstm.input || s.h.len() != h {
            return Err(Error::Shape("cache entry does not match parameters".into()));
        }
        let dl = &d_logits[t];
        let dv = d_values[t];

        let mut dh = dh_next.clone();
        for (a, &g) in dl.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = a * h..(a + 1) * h;
            for ((dhk, w), (gw, hk)) in
                dh.iter_mut().zip(&params.heads.w_p[row.clone()]).zip(grads.heads.w_p[row].iter_mut().zip(&s.h))
            {
                *dhk += g * w;
                *gw += g * hk;
            }
            grads.heads.b_p[a] += g;
        }
        for k in 0..h {
            dh[k] += dv * params.heads.w_v[k];
            grads.heads.w_v[k] += dv * s.h[k];
        }
        grads.heads.b_v[0] += dv;

        for k in 0..h {
            let d_o = dh[k] * s.tanh_c[k];
            let dc = dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
            let di = dc * s.g[k];
            let dg = dc * s.i[k];
            let df = dc * s.c_prev[k];
            dc_next[k] = dc * s.f[k];
            dz[k] = di * s.i[k] * (1.0 - s.i[k]);
            dz[h + k] = df * s.f[k] * (1.0 - s.f[k]);
            dz[2 * h + k] = dg * (1.0 - s.g[k] * s.g[k]);
            dz[3 * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
        }

        for (gb, d) in grads.lstm.b.iter_mut().zip(&dz) {
            *gb += d;
        }
        for (j, &xj) in s.x.iter().enumerate() {
            if xj != 0.0 {
                let row = &mut grads.lstm.w_x[j * width..(j + 1) * width];
                for (g, d) in row.iter_mut().zip(&dz) {
                    *g += xj * d;
                }
            }
        }
        for k in 0..h {
            let hk = s.h_prev[k];
            let row = k * width..(k + 1) * width;
            if hk != 0.0 {
                for (g, d) in grads.lstm.w_h[row.clone()].iter_mut().zip(&dz) {
                    *g += hk * d;
                }
            }
            dh_next[k] = params.lstm.w_h[row].iter().zip(&dz).map(|(w, d)| w * d).sum();
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: PolicyParams,
    pub v: PolicyParams,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &PolicyParams, lr: f64) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut PolicyParams, grads: &PolicyParams, state: &mut AdamState) -> Result<()> {
    params.same_shape(grads)?;
    params.same_shape(&state.m)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.lr;
    let eps = state.eps;
    let tensors = params.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in tensors.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// A differentiable loss over per-step logits and values.
pub trait SequenceLoss {
    fn loss(&self, logits: &[Logits], values: &[f64]) -> f64;

    /// Gradients of [`SequenceLoss::loss`] with respect to logits and values.
    fn grad(&self, logits: &[Logits], values: &[f64]) -> (Vec<Logits>, Vec<f64>);
}

/// Loss and analytic parameter gradient over a sequence.
pub fn loss_and_grad<L: SequenceLoss>(
    params: &PolicyParams,
    inputs: &[Vec<f64>],
    initial: &HiddenState,
    loss: &L,
) -> Result<(f64, PolicyParams)> {
    let (cache, _) = forward_sequence(params, inputs, initial)?;
    let value = loss.loss(&cache.logits, &cache.values);
    let (dl, dv) = loss.grad(&cache.logits, &cache.values);
    let grads = backward_sequence(params, &cache, &dl, &dv)?;
    Ok((value, grads))
}

pub const FD_STEP: f64 = 1e-3;

/// Max over parameters of `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`
/// using the five-point central difference with step [`FD_STEP`]. The
/// fourth-order stencil allows a step large enough that cancellation noise
/// stays well below the smallest gradients compared.
pub fn finite_diff_check<L: SequenceLoss>(
    params: &PolicyParams,
    inputs: &[Vec<f64>],
    initial: &HiddenState,
    loss: &L,
) -> Result<f64> {
    finite_diff_check_with(params, inputs, initial, loss, |_| {})
}

/// As [`finite_diff_check`], with `mutate` applied to the analytic gradient
/// before comparison.
pub fn finite_diff_check_with<L: SequenceLoss>(
    params: &PolicyParams,
    inputs: &[Vec<f64>],
    initial: &HiddenState,
    loss: &L,
    mutate: impl FnOnce(&mut PolicyParams),
) -> Result<f64> {
    let (_, mut analytic) = loss_and_grad(params, inputs, initial, loss)?;
    mutate(&mut analytic);
    let eval = |p: &PolicyParams| -> Result<f64> {
        let (cache, _) = forward_sequence(p, inputs, initial)?;
        Ok(loss.loss(&cache.logits, &cache.values))
    };
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (ti, grad) in analytic.tensors().iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.tensors()[ti][k];
            let mut at = |offset: f64| -> Result<f64> {
                probe.tensors_mut()[ti][k] = orig + offset * FD_STEP;
                eval(&probe)
            };
            let (p1, m1, p2, m2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
            probe.tensors_mut()[ti][k] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * FD_STEP);
            let a = grad[k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob in elements.
    pub offset: usize,
    pub len: usize,
}

/// JSON manifest describing a parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_actions: usize,
    #[serde(default)]
    pub encoding: Encoding,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

pub const CHECKPOINT_FORMAT: &str = "searchassist-lstm-a3c";
pub const BLOB_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "params.json";

impl CheckpointManifest {
    pub fn describe(params: &PolicyParams, encoding: Encoding) -> Self {
        let mut offset = 0;
        let tensors = TENSOR_NAMES
            .iter()
            .zip(params.tensor_shapes())
            .zip(params.tensors())
            .map(|((name, shape), t)| {
                let e = TensorEntry { name: name.to_string(), shape, offset, len: t.len() };
                offset += t.len();
                e
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            input_size: params.input_size(),
            hidden_size: params.hidden_size(),
            num_actions: NUM_ACTIONS,
            encoding,
            dtype: "f64-le".into(),
            tensors,
        }
    }
}

/// Writes `params.bin` (little-endian f64, tensors concatenated in
/// manifest order) and `params.json` into `dir`.
pub fn save_checkpoint(dir: &Path, params: &PolicyParams, encoding: Encoding) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let manifest = CheckpointManifest::describe(params, encoding);
    let mut blob = Vec::with_capacity(params.num_params() * 8);
    for t in params.tensors() {
        for x in t {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::File::create(dir.join(BLOB_FILE))?.write_all(&blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Shape(format!("unknown checkpoint format `{}`", manifest.format)));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(PolicyParams, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    if manifest.num_actions != NUM_ACTIONS || manifest.input_size != STATE_DIM {
        return Err(Error::Shape(format!(
            "checkpoint has input {} / actions {}, expected {STATE_DIM} / {NUM_ACTIONS}",
            manifest.input_size, manifest.num_actions
        )));
    }
    let mut bytes = Vec::new();
    fs::File::open(dir.join(BLOB_FILE))?.read_to_end(&mut bytes)?;
    let mut params = PolicyParams::zeros(manifest.input_size, manifest.hidden_size);
    let expected = params.num_params();
    if bytes.len() != expected * 8 {
        return Err(Error::Shape(format!("blob has {} bytes, expected {}", bytes.len(), expected * 8)));
    }
    let shapes = params.tensor_shapes();
    for ((entry, name), shape) in manifest.tensors.iter().zip(TENSOR_NAMES).zip(shapes) {
        if entry.name != name || entry.shape != shape {
            return Err(Error::Shape(format!("tensor `{}` does not match `{name}` {shape:?}", entry.name)));
        }
    }
    for (entry, t) in manifest.tensors.iter().zip(params.tensors_mut()) {
        let start = entry.offset * 8;
        for (k, x) in t.iter_mut().enumerate() {
            let b: [u8; 8] = bytes[start + k * 8..start + k * 8 + 8].try_into().expect("8 bytes");
            *x = f64::from_le_bytes(b);
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint"));
    }
    Ok((params, manifest))
}

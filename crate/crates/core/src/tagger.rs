//! Span classifier over entity categories plus `NEG`.
//!
//! A span is represented by an attention-weighted mean of its token vectors
//! (content) concatenated with the contextual vectors at its first and last
//! token (boundary). A one-hidden-layer tanh MLP with a softmax head predicts
//! the class. The contextualizer is either the identity (ingested embeddings
//! are used as-is) or a small bidirectional tanh recurrent layer.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{CandidateId, CandidateIndex};
use crate::corpus::{Corpus, TokenRange};

#[derive(Debug, Error, PartialEq)]
pub enum TaggerError {
    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(&'static str),
    #[error("representation has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite parameter after update in epoch {0}")]
    NonFinite(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Contextualizer {
    #[default]
    Identity,
    /// Forward and backward tanh recurrent cells of width `hidden` each.
    BiRnn { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negatives sampled per positive, each epoch.
    pub negative_ratio: f64,
    /// Spans predicted `NEG` above this confidence join the negative pool.
    pub negative_confidence: f64,
    pub init_scale: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub contextualizer: Contextualizer,
    /// Reuse the previous iteration's parameters instead of re-initializing.
    pub warm_start: bool,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-2,
            momentum: 0.9,
            epochs: 50,
            batch_size: 32,
            negative_ratio: 5.0,
            negative_confidence: 0.9,
            init_scale: 0.08,
            clip_norm: Some(5.0),
            contextualizer: Contextualizer::Identity,
            warm_start: false,
        }
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    dim: usize,
    rnn: usize,
    hidden: usize,
    classes: usize,
    attention: usize,
    fwd_in: usize,
    fwd_rec: usize,
    fwd_b: usize,
    bwd_in: usize,
    bwd_rec: usize,
    bwd_b: usize,
    hidden_w: usize,
    hidden_b: usize,
    out_w: usize,
    out_b: usize,
    total: usize,
}

impl Layout {
    fn new(dim: usize, ctx: Contextualizer, hidden: usize, classes: usize) -> Self {
        let rnn = match ctx {
            Contextualizer::Identity => 0,
            Contextualizer::BiRnn { hidden } => hidden,
        };
        let ctx_dim = if rnn == 0 { dim } else { 2 * rnn };
        let input = dim + 2 * ctx_dim;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let attention = take(dim);
        let fwd_in = take(rnn * dim);
        let fwd_rec = take(rnn * rnn);
        let fwd_b = take(rnn);
        let bwd_in = take(rnn * dim);
        let bwd_rec = take(rnn * rnn);
        let bwd_b = take(rnn);
        let hidden_w = take(hidden * input);
        let hidden_b = take(hidden);
        let out_w = take(classes * hidden);
        let out_b = take(classes);
        Self {
            dim,
            rnn,
            hidden,
            classes,
            attention,
            fwd_in,
            fwd_rec,
            fwd_b,
            bwd_in,
            bwd_rec,
            bwd_b,
            hidden_w,
            hidden_b,
            out_w,
            out_b,
            total: at,
        }
    }

    fn ctx_dim(&self) -> usize {
        if self.rnn == 0 {
            self.dim
        } else {
            2 * self.rnn
        }
    }

    fn input(&self) -> usize {
        self.dim + 2 * self.ctx_dim()
    }

    fn tensors(&self) -> [(&'static str, usize, usize); 11] {
        let (r, d, h, c, i) = (self.rnn, self.dim, self.hidden, self.classes, self.input());
        [
            ("attention", self.attention, d),
            ("fwd_in", self.fwd_in, r * d),
            ("fwd_rec", self.fwd_rec, r * r),
            ("fwd_b", self.fwd_b, r),
            ("bwd_in", self.bwd_in, r * d),
            ("bwd_rec", self.bwd_rec, r * r),
            ("bwd_b", self.bwd_b, r),
            ("hidden_w", self.hidden_w, h * i),
            ("hidden_b", self.hidden_b, h),
            ("out_w", self.out_w, c * h),
            ("out_b", self.out_b, c),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerParams {
    layout: Layout,
    values: Vec<f64>,
    pub labels: Vec<String>,
    pub config: TaggerConfig,
    pub seed: u64,
}

impl TaggerParams {
    /// All-zero parameters for `labels` plus `NEG`.
    pub fn zeros(dim: usize, labels: &[String], config: TaggerConfig, seed: u64) -> Self {
        let layout = Layout::new(dim, config.contextualizer, config.hidden, labels.len() + 1);
        Self {
            values: vec![0.0; layout.total],
            layout,
            labels: labels.to_vec(),
            config,
            seed,
        }
    }

    /// Uniform initialization in `[-init_scale, init_scale]`.
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        labels: &[String],
        config: TaggerConfig,
        seed: u64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(dim, labels, config, seed);
        let s = config.init_scale;
        for v in &mut p.values {
            *v = if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
        }
        p
    }

    pub fn num_classes(&self) -> usize {
        self.layout.classes
    }

    /// Index of the `NEG` class (always last).
    pub fn neg_class(&self) -> usize {
        self.layout.classes - 1
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn representation_dim(&self) -> usize {
        self.layout.input()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn slice(&self, off: usize, len: usize) -> &[f64] {
        &self.values[off..off + len]
    }

    pub fn attention_mut(&mut self) -> &mut [f64] {
        let (o, d) = (self.layout.attention, self.layout.dim);
        &mut self.values[o..o + d]
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let (o, c) = (self.layout.out_b, self.layout.classes);
        &mut self.values[o..o + c]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensors = self
            .layout
            .tensors()
            .iter()
            .filter(|(_, _, len)| *len > 0)
            .map(|&(name, off, len)| (name.to_string(), self.values[off..off + len].to_vec()))
            .collect();
        Checkpoint {
            version: 1,
            labels: self.labels.clone(),
            dim: self.layout.dim,
            seed: self.seed,
            config: self.config,
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TaggerError> {
        if ck.version != 1 {
            return Err(TaggerError::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        let mut p = Self::zeros(ck.dim, &ck.labels, ck.config, ck.seed);
        for (name, off, len) in p.layout.tensors() {
            if len == 0 {
                continue;
            }
            let t = ck
                .tensors
                .get(name)
                .ok_or_else(|| TaggerError::Checkpoint(format!("missing tensor {name}")))?;
            if t.len() != len {
                return Err(TaggerError::Checkpoint(format!(
                    "tensor {name} has {} entries, expected {len}",
                    t.len()
                )));
            }
            p.values[off..off + len].copy_from_slice(t);
        }
        Ok(p)
    }
}

/// Serialized parameters plus everything needed to rebuild them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub labels: Vec<String>,
    pub dim: usize,
    pub seed: u64,
    pub config: TaggerConfig,
    pub tensors: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanPrediction {
    pub candidate: CandidateId,
    /// Distribution over labels followed by `NEG`.
    pub probs: Vec<f64>,
    pub class: usize,
    pub confidence: f64,
}

impl SpanPrediction {
    fn from_probs(candidate: CandidateId, probs: Vec<f64>) -> Self {
        let (class, confidence) = argmax(&probs);
        Self {
            candidate,
            probs,
            class,
            confidence,
        }
    }
}

/// Lowest index wins ties.
fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    (best, v[best])
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Recurrent states of one sentence (empty when the contextualizer is the identity).
struct SentenceStates {
    fwd: Vec<Vec<f64>>,
    bwd: Vec<Vec<f64>>,
}

fn run_rnn(p: &TaggerParams, tokens: &[&[f64]]) -> SentenceStates {
    let l = &p.layout;
    let (h, d, n) = (l.rnn, l.dim, tokens.len());
    if h == 0 {
        return SentenceStates {
            fwd: Vec::new(),
            bwd: Vec::new(),
        };
    }
    let step = |w_in: usize, w_rec: usize, b: usize, x: &[f64], prev: Option<&Vec<f64>>| {
        (0..h)
            .map(|i| {
                let mut a = p.values[b + i] + dot(p.slice(w_in + i * d, d), x);
                if let Some(prev) = prev {
                    a += dot(p.slice(w_rec + i * h, h), prev);
                }
                a.tanh()
            })
            .collect::<Vec<f64>>()
    };
    let mut fwd: Vec<Vec<f64>> = Vec::with_capacity(n);
    for x in tokens {
        let s = step(l.fwd_in, l.fwd_rec, l.fwd_b, x, fwd.last());
        fwd.push(s);
    }
    let mut bwd: Vec<Vec<f64>> = vec![Vec::new(); n];
    for t in (0..n).rev() {
        let prev = if t + 1 < n { Some(&bwd[t + 1]) } else { None };
        bwd[t] = step(l.bwd_in, l.bwd_rec, l.bwd_b, tokens[t], prev);
    }
    SentenceStates { fwd, bwd }
}

fn context_vector(states: &SentenceStates, tokens: &[&[f64]], t: usize) -> Vec<f64> {
    if states.fwd.is_empty() {
        tokens[t].to_vec()
    } else {
        let mut v = states.fwd[t].clone();
        v.extend_from_slice(&states.bwd[t]);
        v
    }
}

struct SpanForward {
    weights: Vec<f64>,
    z: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

fn represent(
    p: &TaggerParams,
    tokens: &[&[f64]],
    states: &SentenceStates,
    range: TokenRange,
) -> (Vec<f64>, Vec<f64>) {
    let d = p.layout.dim;
    let att = p.slice(p.layout.attention, d);
    let mut weights: Vec<f64> = (range.start..range.end)
        .map(|t| dot(att, tokens[t]))
        .collect();
    softmax_in_place(&mut weights);
    let mut z = vec![0.0; d];
    for (w, t) in weights.iter().zip(range.start..range.end) {
        for (zi, x) in z.iter_mut().zip(tokens[t]) {
            *zi += w * x;
        }
    }
    z.extend(context_vector(states, tokens, range.start));
    z.extend(context_vector(states, tokens, range.end - 1));
    (weights, z)
}

fn mlp(p: &TaggerParams, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let l = &p.layout;
    let inp = l.input();
    let hidden: Vec<f64> = (0..l.hidden)
        .map(|i| (p.values[l.hidden_b + i] + dot(p.slice(l.hidden_w + i * inp, inp), z)).tanh())
        .collect();
    let mut probs: Vec<f64> = (0..l.classes)
        .map(|c| p.values[l.out_b + c] + dot(p.slice(l.out_w + c * l.hidden, l.hidden), &hidden))
        .collect();
    softmax_in_place(&mut probs);
    (hidden, probs)
}

fn forward(
    p: &TaggerParams,
    tokens: &[&[f64]],
    states: &SentenceStates,
    range: TokenRange,
) -> SpanForward {
    let (weights, z) = represent(p, tokens, states, range);
    let (hidden, probs) = mlp(p, &z);
    SpanForward {
        weights,
        z,
        hidden,
        probs,
    }
}

/// Accumulates `scale · ∂(−log p_target)/∂θ` into `grad`, and the gradient
/// with respect to contextual vectors into `d_ctx` (recurrent case only).
#[allow(clippy::too_many_arguments)]
fn backward(
    p: &TaggerParams,
    tokens: &[&[f64]],
    range: TokenRange,
    fw: &SpanForward,
    target: usize,
    scale: f64,
    grad: &mut [f64],
    d_ctx: Option<&mut [Vec<f64>]>,
) {
    let l = &p.layout;
    let (d, hdim, inp) = (l.dim, l.hidden, l.input());
    let mut d_out = fw.probs.clone();
    d_out[target] -= 1.0;
    d_out.iter_mut().for_each(|v| *v *= scale);

    let mut d_hidden = vec![0.0; hdim];
    for c in 0..l.classes {
        grad[l.out_b + c] += d_out[c];
        let row = l.out_w + c * hdim;
        for j in 0..hdim {
            grad[row + j] += d_out[c] * fw.hidden[j];
            d_hidden[j] += d_out[c] * p.values[row + j];
        }
    }
    let mut dz = vec![0.0; inp];
    for i in 0..hdim {
        let dpre = d_hidden[i] * (1.0 - fw.hidden[i] * fw.hidden[i]);
        grad[l.hidden_b + i] += dpre;
        let row = l.hidden_w + i * inp;
        for j in 0..inp {
            grad[row + j] += dpre * fw.z[j];
            dz[j] += dpre * p.values[row + j];
        }
    }

    // content attention
    let dcontent = &dz[..d];
    let dw: Vec<f64> = (range.start..range.end)
        .map(|t| dot(dcontent, tokens[t]))
        .collect();
    let mean_dw: f64 = fw.weights.iter().zip(&dw).map(|(w, g)| w * g).sum();
    for (k, t) in (range.start..range.end).enumerate() {
        let dalpha = fw.weights[k] * (dw[k] - mean_dw);
        for (j, x) in tokens[t].iter().enumerate() {
            grad[l.attention + j] += dalpha * x;
        }
    }

    if let Some(d_ctx) = d_ctx {
        let cd = l.ctx_dim();
        for j in 0..cd {
            d_ctx[range.start][j] += dz[d + j];
            d_ctx[range.end - 1][j] += dz[d + cd + j];
        }
    }
}

fn backward_rnn(
    p: &TaggerParams,
    tokens: &[&[f64]],
    states: &SentenceStates,
    d_ctx: &[Vec<f64>],
    grad: &mut [f64],
) {
    let l = &p.layout;
    let (h, d, n) = (l.rnn, l.dim, tokens.len());
    let mut carry = vec![0.0; h];
    for t in (0..n).rev() {
        let dpre: Vec<f64> = (0..h)
            .map(|i| (d_ctx[t][i] + carry[i]) * (1.0 - states.fwd[t][i] * states.fwd[t][i]))
            .collect();
        carry.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..h {
            grad[l.fwd_b + i] += dpre[i];
            for j in 0..d {
                grad[l.fwd_in + i * d + j] += dpre[i] * tokens[t][j];
            }
            if t > 0 {
                for j in 0..h {
                    grad[l.fwd_rec + i * h + j] += dpre[i] * states.fwd[t - 1][j];
                    carry[j] += p.values[l.fwd_rec + i * h + j] * dpre[i];
                }
            }
        }
    }
    carry.iter_mut().for_each(|c| *c = 0.0);
    for t in 0..n {
        let dpre: Vec<f64> = (0..h)
            .map(|i| (d_ctx[t][h + i] + carry[i]) * (1.0 - states.bwd[t][i] * states.bwd[t][i]))
            .collect();
        carry.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..h {
            grad[l.bwd_b + i] += dpre[i];
            for j in 0..d {
                grad[l.bwd_in + i * d + j] += dpre[i] * tokens[t][j];
            }
            if t + 1 < n {
                for j in 0..h {
                    grad[l.bwd_rec + i * h + j] += dpre[i] * states.bwd[t + 1][j];
                    carry[j] += p.values[l.bwd_rec + i * h + j] * dpre[i];
                }
            }
        }
    }
}

fn sentence_tokens(corpus: &Corpus, sentence: usize) -> Vec<&[f64]> {
    corpus.sentences[sentence]
        .tokens
        .iter()
        .map(|t| t.embedding.as_slice())
        .collect()
}

/// A labelled span; `class` indexes labels, with `NEG` last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Example {
    pub sentence: usize,
    pub range: TokenRange,
    pub class: usize,
}

/// Span representation `[content ; boundary_start ; boundary_end]`.
pub fn span_representation(
    params: &TaggerParams,
    corpus: &Corpus,
    sentence: usize,
    range: TokenRange,
) -> Vec<f64> {
    let tokens = sentence_tokens(corpus, sentence);
    let states = run_rnn(params, &tokens);
    represent(params, &tokens, &states, range).1
}

pub fn predict_span(
    representation: &[f64],
    params: &TaggerParams,
) -> Result<SpanPrediction, TaggerError> {
    if representation.len() != params.representation_dim() {
        return Err(TaggerError::DimensionMismatch {
            expected: params.representation_dim(),
            found: representation.len(),
        });
    }
    let (_, probs) = mlp(params, representation);
    Ok(SpanPrediction::from_probs(0, probs))
}

/// One prediction per canonical candidate, in candidate order.
pub fn predict_corpus(
    params: &TaggerParams,
    corpus: &Corpus,
    index: &CandidateIndex,
) -> Vec<SpanPrediction> {
    let mut out = Vec::with_capacity(index.len());
    let mut cached: Option<(usize, Vec<&[f64]>, SentenceStates)> = None;
    for (id, unit) in index.units().iter().enumerate() {
        if cached.as_ref().is_none_or(|c| c.0 != unit.sentence) {
            let tokens = sentence_tokens(corpus, unit.sentence);
            let states = run_rnn(params, &tokens);
            cached = Some((unit.sentence, tokens, states));
        }
        let (_, tokens, states) = cached.as_ref().unwrap();
        let fw = forward(params, tokens, states, unit.range);
        out.push(SpanPrediction::from_probs(id, fw.probs));
    }
    out
}

/// Mean cross-entropy over `batch` and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    params: &TaggerParams,
    corpus: &Corpus,
    batch: &[Example],
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.values.len()];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut by_sentence: BTreeMap<usize, Vec<&Example>> = BTreeMap::new();
    for e in batch {
        by_sentence.entry(e.sentence).or_default().push(e);
    }
    let mut loss = 0.0;
    let recurrent = params.layout.rnn > 0;
    for (sentence, examples) in by_sentence {
        let tokens = sentence_tokens(corpus, sentence);
        let states = run_rnn(params, &tokens);
        let mut d_ctx = recurrent.then(|| vec![vec![0.0; params.layout.ctx_dim()]; tokens.len()]);
        for e in examples {
            let fw = forward(params, &tokens, &states, e.range);
            loss -= fw.probs[e.class].max(1e-300).ln() * scale;
            backward(
                params,
                &tokens,
                e.range,
                &fw,
                e.class,
                scale,
                &mut grad,
                d_ctx.as_deref_mut(),
            );
        }
        if let Some(d_ctx) = &d_ctx {
            backward_rnn(params, &tokens, &states, d_ctx, &mut grad);
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLog {
    /// Mean training loss of each epoch, measured before that epoch's updates.
    pub epoch_loss: Vec<f64>,
}

/// Minibatch gradient descent with momentum on positives plus negatives
/// resampled from `negative_pool` every epoch. Inputs are sorted first, so
/// the result depends only on their contents and the rng.
pub fn train_tagger<R: Rng + ?Sized>(
    corpus: &Corpus,
    positives: &[Example],
    negative_pool: &[Example],
    init: TaggerParams,
    rng: &mut R,
) -> Result<(TaggerParams, TrainLog), TaggerError> {
    if positives.is_empty() {
        return Err(TaggerError::DegenerateTrainingSet("no positive examples"));
    }
    if negative_pool.is_empty() {
        return Err(TaggerError::DegenerateTrainingSet("no negative examples"));
    }
    let mut positives = positives.to_vec();
    positives.sort_unstable();
    positives.dedup();
    let mut pool = negative_pool.to_vec();
    pool.sort_unstable();
    pool.dedup();

    let mut params = init;
    let cfg = params.config;
    let mut velocity = vec![0.0; params.values.len()];
    let per_epoch =
        ((positives.len() as f64 * cfg.negative_ratio).ceil() as usize).clamp(1, pool.len());
    let batch_size = cfg.batch_size.max(1);
    let mut log = TrainLog {
        epoch_loss: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        let mut examples = positives.clone();
        examples.extend(
            sample(rng, pool.len(), per_epoch)
                .into_iter()
                .map(|i| pool[i]),
        );
        examples.sort_unstable();
        examples.shuffle(rng);

        let mut epoch_loss = 0.0;
        for batch in examples.chunks(batch_size) {
            let (loss, mut grad) = loss_and_gradient(&params, corpus, batch);
            epoch_loss += loss * batch.len() as f64;
            if let Some(max) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max && norm > 0.0 {
                    let s = max / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            for ((w, v), g) in params.values.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *w -= cfg.learning_rate * *v;
            }
        }
        if params.values.iter().any(|v| !v.is_finite()) {
            return Err(TaggerError::NonFinite(epoch));
        }
        log.epoch_loss.push(epoch_loss / examples.len() as f64);
    }
    Ok((params, log))
}

/// Per label, the spans predicted as that label, most confident first,
/// truncated to `ceil(fraction × count)`.
pub fn top_confident(
    predictions: &[SpanPrediction],
    fraction: f64,
    num_labels: usize,
) -> Vec<Vec<CandidateId>> {
    let mut per: Vec<Vec<&SpanPrediction>> = vec![Vec::new(); num_labels];
    for p in predictions {
        if p.class < num_labels {
            per[p.class].push(p);
        }
    }
    per.into_iter()
        .map(|mut list| {
            list.sort_by(|a, b| {
                b.confidence
                    .partial_cmp(&a.confidence)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.candidate.cmp(&b.candidate))
            });
            // guard against 0.7 * 10 = 7.000000000000001
            let keep = ((fraction * list.len() as f64) - 1e-9).ceil().max(0.0) as usize;
            list.into_iter().take(keep).map(|p| p.candidate).collect()
        })
        .collect()
}

//! Dynamic training-label selection against per-category high-precision sets.
//!
//! A weakly labelled instance is scored by the geometric mean of a local score
//! (max cosine to any set member) and a global score (mean cosine to sampled
//! prototypes), and admitted when it beats a leave-one-out threshold.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{CandidateId, CandidateIndex};
use crate::corpus::{Corpus, Sentence, TokenRange};
use crate::rules::{LabelId, WeakLabel};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("degenerate embedding (zero norm)")]
    DegenerateEmbedding,
    #[error("high-precision set is empty")]
    EmptySet,
    #[error("set too small for holdout ({0} members)")]
    SetTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    /// Threshold temperature.
    pub temperature: f64,
    /// Number of sampled prototypes for the global score.
    pub global_samples: usize,
    /// Size of each sampled subset.
    pub sample_size: usize,
    /// Upper bound on leave-one-out repeats.
    pub holdout_repeats: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            global_samples: 50,
            sample_size: 3,
            holdout_repeats: 50,
        }
    }
}

/// Mean of the token embeddings over `range`.
pub fn instance_embedding(sentence: &Sentence, range: TokenRange) -> Vec<f64> {
    let tokens = &sentence.tokens[range.start..range.end];
    let dim = tokens[0].embedding.len();
    let mut out = vec![0.0; dim];
    for t in tokens {
        for (o, v) in out.iter_mut().zip(&t.embedding) {
            *o += v;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, SelectionError> {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SelectionError::DegenerateEmbedding);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

pub fn local_score<V: AsRef<[f64]>>(query: &[f64], members: &[V]) -> Result<f64, SelectionError> {
    if members.is_empty() {
        return Err(SelectionError::EmptySet);
    }
    let mut best = f64::NEG_INFINITY;
    for m in members {
        best = best.max(cosine(query, m.as_ref())?);
    }
    Ok(best)
}

/// Mean cosine between `query` and `samples` random prototypes, each the mean
/// of `sample_size` members (drawn without replacement when the set is large
/// enough, with replacement otherwise).
pub fn global_score<V: AsRef<[f64]>, R: Rng + ?Sized>(
    query: &[f64],
    members: &[V],
    samples: usize,
    sample_size: usize,
    rng: &mut R,
) -> Result<f64, SelectionError> {
    if members.is_empty() {
        return Err(SelectionError::EmptySet);
    }
    let n = members.len();
    let k = sample_size.min(n).max(1);
    let dim = query.len();
    let mut proto = vec![0.0; dim];
    let mut total = 0.0;
    for _ in 0..samples.max(1) {
        let mut picks: Vec<usize> = if n >= sample_size {
            sample(rng, n, k).into_vec()
        } else {
            (0..k).map(|_| rng.gen_range(0..n)).collect()
        };
        // fixed summation order: a full draw reproduces the centroid exactly
        picks.sort_unstable();
        proto.iter_mut().for_each(|v| *v = 0.0);
        for &i in &picks {
            for (p, v) in proto.iter_mut().zip(members[i].as_ref()) {
                *p += v;
            }
        }
        proto.iter_mut().for_each(|v| *v /= k as f64);
        total += cosine(&proto, query)?;
    }
    Ok(total / samples.max(1) as f64)
}

/// Geometric mean of the clamped local and global scores.
pub fn combine_scores(local: f64, global: f64) -> f64 {
    if local <= 0.0 || global <= 0.0 {
        return 0.0;
    }
    (local.min(1.0) * global.min(1.0)).sqrt()
}

pub fn confidence_score<V: AsRef<[f64]>, R: Rng + ?Sized>(
    query: &[f64],
    members: &[V],
    params: &SelectionParams,
    rng: &mut R,
) -> Result<f64, SelectionError> {
    let local = local_score(query, members)?;
    let global = global_score(
        query,
        members,
        params.global_samples,
        params.sample_size,
        rng,
    )?;
    Ok(combine_scores(local, global))
}

/// `temperature × min` leave-one-out confidence over up to
/// `holdout_repeats` distinct held-out members.
pub fn dynamic_threshold<V: AsRef<[f64]>, R: Rng + ?Sized>(
    members: &[V],
    params: &SelectionParams,
    rng: &mut R,
) -> Result<f64, SelectionError> {
    let n = members.len();
    if n < 2 {
        return Err(SelectionError::SetTooSmall(n));
    }
    let repeats = params.holdout_repeats.min(n).max(1);
    let mut held: Vec<usize> = sample(rng, n, repeats).into_vec();
    held.sort_unstable();
    let mut min = f64::INFINITY;
    let mut rest: Vec<&[f64]> = Vec::with_capacity(n - 1);
    for &h in &held {
        rest.clear();
        rest.extend(
            members
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != h)
                .map(|(_, m)| m.as_ref()),
        );
        let c = confidence_score(members[h].as_ref(), &rest, params, rng)?;
        min = min.min(c);
    }
    Ok(params.temperature * min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member {
    pub candidate: CandidateId,
    pub embedding: Vec<f64>,
    pub iteration: usize,
}

impl AsRef<[f64]> for Member {
    fn as_ref(&self) -> &[f64] {
        &self.embedding
    }
}

/// Per-category pools of accepted instances. Only grows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HighPrecisionSet {
    categories: Vec<Vec<Member>>,
    keys: HashSet<CandidateId>,
}

impl HighPrecisionSet {
    pub fn new(num_labels: usize) -> Self {
        Self {
            categories: vec![Vec::new(); num_labels],
            keys: HashSet::new(),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.categories.len()
    }

    pub fn members(&self, label: LabelId) -> &[Member] {
        &self.categories[label.0]
    }

    pub fn contains(&self, candidate: CandidateId) -> bool {
        self.keys.contains(&candidate)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.categories.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Adds a member unless its candidate is already present in any category.
    pub fn insert(&mut self, label: LabelId, member: Member) -> bool {
        if !self.keys.insert(member.candidate) {
            return false;
        }
        self.categories[label.0].push(member);
        true
    }

    /// `(candidate, label)` pairs in insertion order per category.
    pub fn labelled(&self) -> Vec<(CandidateId, LabelId)> {
        self.categories
            .iter()
            .enumerate()
            .flat_map(|(l, ms)| ms.iter().map(move |m| (m.candidate, LabelId(l))))
            .collect()
    }
}

fn embed(corpus: &Corpus, index: &CandidateIndex, candidate: CandidateId) -> Vec<f64> {
    let unit = index.unit(candidate);
    instance_embedding(&corpus.sentences[unit.sentence], unit.range)
}

/// Admits every weak label unconditionally (seed-rule matches before the
/// first iteration).
pub fn seed_high_precision(
    weak: &[WeakLabel],
    corpus: &Corpus,
    index: &CandidateIndex,
    set: &mut HighPrecisionSet,
) -> Vec<WeakLabel> {
    let mut accepted = Vec::new();
    for w in weak {
        let member = Member {
            candidate: w.candidate,
            embedding: embed(corpus, index, w.candidate),
            iteration: 0,
        };
        if set.insert(w.label, member) {
            accepted.push(w.clone());
        }
    }
    accepted
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub accepted: Vec<WeakLabel>,
    /// Threshold per category; `None` when the category was frozen (< 2 members).
    pub thresholds: Vec<Option<f64>>,
}

/// Scores weak labels not yet in the set against a snapshot of it and appends
/// those whose confidence exceeds their category threshold.
pub fn select_labels<R: Rng + ?Sized>(
    weak: &[WeakLabel],
    corpus: &Corpus,
    index: &CandidateIndex,
    set: &mut HighPrecisionSet,
    params: &SelectionParams,
    iteration: usize,
    rng: &mut R,
) -> Result<SelectionOutcome, SelectionError> {
    let mut thresholds = Vec::with_capacity(set.num_labels());
    for l in 0..set.num_labels() {
        thresholds.push(
            match dynamic_threshold(set.members(LabelId(l)), params, rng) {
                Ok(t) => Some(t),
                Err(SelectionError::SetTooSmall(_)) => None,
                Err(e) => return Err(e),
            },
        );
    }

    let mut admitted = Vec::new();
    for w in weak {
        if set.contains(w.candidate) {
            continue;
        }
        let Some(threshold) = thresholds[w.label.0] else {
            continue;
        };
        let emb = embed(corpus, index, w.candidate);
        let score = confidence_score(&emb, set.members(w.label), params, rng)?;
        if score > threshold {
            admitted.push((w.clone(), emb));
        }
    }

    let mut accepted = Vec::with_capacity(admitted.len());
    for (w, embedding) in admitted {
        let member = Member {
            candidate: w.candidate,
            embedding,
            iteration,
        };
        if set.insert(w.label, member) {
            accepted.push(w);
        }
    }
    Ok(SelectionOutcome {
        accepted,
        thresholds,
    })
}

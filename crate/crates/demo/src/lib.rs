//! Browser bindings. Each exported function takes and returns JSON strings;
//! the `*_json` functions hold the logic so they can be tested natively.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use spanrules_core::corpus::{Sentence, TokenRange};
use spanrules_core::driver::{bootstrap, BootstrapConfig, Silent};
use spanrules_core::fixtures::s1_sentence;
use spanrules_core::learner::SelectionStrategy;
use spanrules_core::rules::CandidatePatterns;
use spanrules_core::selection::{
    combine_scores, dynamic_threshold, global_score, local_score, SelectionParams,
};
use spanrules_core::synthetic::{generate, SyntheticConfig};
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn from_json<'a, T: Deserialize<'a>>(s: &'a str) -> Result<T, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TokenView {
    text: String,
    lemma: String,
    pos: String,
    head: i64,
}

#[derive(Serialize)]
struct SentenceView {
    id: String,
    tokens: Vec<TokenView>,
    /// `(start, end, label)` of gold entities.
    gold: Vec<(usize, usize, String)>,
}

fn view(s: &Sentence) -> SentenceView {
    SentenceView {
        id: s.id.clone(),
        tokens: s
            .tokens
            .iter()
            .map(|t| TokenView {
                text: t.text.clone(),
                lemma: t.lemma.clone(),
                pos: t.pos.clone(),
                head: t.head,
            })
            .collect(),
        gold: s
            .gold
            .iter()
            .flatten()
            .map(|g| (g.start, g.end, g.label.clone()))
            .collect(),
    }
}

fn sentence_pool(seed: u64, count: usize) -> Vec<Sentence> {
    let data = generate(&SyntheticConfig {
        train_sentences: count,
        dev_sentences: 0,
        test_sentences: 0,
        seed,
        ..Default::default()
    });
    let mut out = vec![s1_sentence()];
    out.extend(data.train.sentences);
    out
}

/// The fixed example sentence followed by `count` synthetic ones.
pub fn sample_sentences_json(seed: u64, count: usize) -> Result<String, String> {
    let views: Vec<SentenceView> = sentence_pool(seed, count.min(200))
        .iter()
        .map(view)
        .collect();
    to_json(&views)
}

#[derive(Serialize)]
struct SpanRules {
    span: String,
    patterns: Vec<String>,
    rules: Vec<String>,
}

/// Simple patterns and candidate rules of a span of sentence `index` from
/// [`sample_sentences_json`] with the same seed and count.
pub fn span_rules_json(
    seed: u64,
    count: usize,
    index: usize,
    start: usize,
    end: usize,
    ngram_max: usize,
) -> Result<String, String> {
    let pool = sentence_pool(seed, count.min(200));
    let s = pool
        .get(index)
        .ok_or_else(|| format!("no sentence {index}"))?;
    if start >= end || end > s.len() {
        return Err(format!(
            "span [{start}, {end}) is outside a {}-token sentence",
            s.len()
        ));
    }
    if ngram_max == 0 {
        return Err("ngram_max must be at least 1".into());
    }
    let range = TokenRange::new(start, end);
    let cp = CandidatePatterns::extract(s, range, ngram_max);
    to_json(&SpanRules {
        span: s.text_of(range),
        patterns: cp.patterns().iter().map(ToString::to_string).collect(),
        rules: cp.skeletons().iter().map(ToString::to_string).collect(),
    })
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdRequest {
    pub members: usize,
    pub dim: usize,
    /// Standard deviation of members around the set center.
    pub spread: f64,
    pub temperature: f64,
    /// Queries are placed at these distances from the center along random directions.
    pub distances: Vec<f64>,
    pub seed: u64,
}

impl Default for ThresholdRequest {
    fn default() -> Self {
        Self {
            members: 12,
            dim: 16,
            spread: 0.5,
            temperature: 0.8,
            distances: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0],
            seed: 1,
        }
    }
}

#[derive(Serialize)]
struct QueryScore {
    distance: f64,
    local: f64,
    global: f64,
    confidence: f64,
    accepted: bool,
}

#[derive(Serialize)]
struct ThresholdReport {
    threshold: f64,
    queries: Vec<QueryScore>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Scores queries at growing distance from a random high-precision set
/// against its dynamic threshold.
pub fn threshold_explorer_json(request: &str) -> Result<String, String> {
    let req: ThresholdRequest = from_json(request)?;
    if req.members < 2 || req.members > 500 {
        return Err("members must lie in [2, 500]".into());
    }
    if req.dim == 0 || req.dim > 512 {
        return Err("dim must lie in [1, 512]".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let center = gaussian(&mut rng, req.dim);
    let members: Vec<Vec<f64>> = (0..req.members)
        .map(|_| {
            let n = gaussian(&mut rng, req.dim);
            center
                .iter()
                .zip(&n)
                .map(|(c, e)| c + req.spread * e)
                .collect()
        })
        .collect();
    let params = SelectionParams {
        temperature: req.temperature,
        ..Default::default()
    };
    let threshold = dynamic_threshold(&members, &params, &mut rng).map_err(|e| e.to_string())?;
    let queries = req
        .distances
        .iter()
        .map(|&d| {
            let dir = gaussian(&mut rng, req.dim);
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let scale = d * (center.iter().map(|x| x * x).sum::<f64>().sqrt());
            let q: Vec<f64> = center
                .iter()
                .zip(&dir)
                .map(|(c, u)| c + scale * u / norm)
                .collect();
            let local = local_score(&q, &members).map_err(|e| e.to_string())?;
            let global = global_score(
                &q,
                &members,
                params.global_samples,
                params.sample_size,
                &mut rng,
            )
            .map_err(|e| e.to_string())?;
            let confidence = combine_scores(local, global);
            Ok(QueryScore {
                distance: d,
                local,
                global,
                confidence,
                accepted: confidence >= threshold,
            })
        })
        .collect::<Result<_, String>>()?;
    to_json(&ThresholdReport { threshold, queries })
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveRequest {
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub iterations: usize,
    pub strategy: SelectionStrategy,
    pub noise: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CurveRequest {
    fn default() -> Self {
        let synth = SyntheticConfig::default();
        Self {
            train_sentences: 200,
            dev_sentences: 100,
            iterations: 5,
            strategy: SelectionStrategy::EntityType,
            noise: synth.noise,
            epochs: BootstrapConfig::default().tagger.epochs,
            seed: synth.seed,
        }
    }
}

#[derive(Serialize)]
struct CurvePoint {
    iteration: usize,
    rules_added: usize,
    high_precision: Vec<usize>,
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Serialize)]
struct CurveReport {
    points: Vec<CurvePoint>,
    best_iteration: usize,
    planted: Vec<(String, bool)>,
    learned: Vec<String>,
}

/// Bootstraps on a small synthetic corpus and reports dev scores per iteration.
pub fn bootstrap_curve_json(request: &str) -> Result<String, String> {
    let req: CurveRequest = from_json(request)?;
    if !(20..=1000).contains(&req.train_sentences) || !(10..=500).contains(&req.dev_sentences) {
        return Err("train_sentences must lie in [20, 1000] and dev_sentences in [10, 500]".into());
    }
    if !(1..=20).contains(&req.iterations) {
        return Err("iterations must lie in [1, 20]".into());
    }
    let data = generate(&SyntheticConfig {
        train_sentences: req.train_sentences,
        dev_sentences: req.dev_sentences,
        test_sentences: 0,
        noise: req.noise,
        seed: req.seed,
        ..Default::default()
    });
    let mut config = BootstrapConfig {
        iterations: req.iterations,
        strategy: req.strategy,
        ..Default::default()
    };
    config.tagger.epochs = req.epochs;
    let art = bootstrap(
        &config,
        &data.train,
        Some(&data.dev),
        &data.seeds,
        &data.lexicon,
        &mut Silent,
    )
    .map_err(|e| e.to_string())?;
    let learned: HashSet<(String, &str)> = art
        .rules
        .rules
        .iter()
        .map(|r| (r.skeleton.to_string(), art.rules.labels[r.label.0].as_str()))
        .collect();
    to_json(&CurveReport {
        points: art
            .reports
            .iter()
            .map(|r| {
                let m = r.dev.clone().unwrap_or_default();
                CurvePoint {
                    iteration: r.iteration,
                    rules_added: r.rules_selected,
                    high_precision: r.high_precision.clone(),
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                }
            })
            .collect(),
        best_iteration: art.best_iteration,
        planted: data
            .planted
            .iter()
            .map(|p| {
                (
                    p.render(),
                    learned.contains(&(p.skeleton.to_string(), p.label.as_str())),
                )
            })
            .collect(),
        learned: art
            .rules
            .rules
            .iter()
            .skip(data.seeds.len())
            .map(|r| r.render(&art.rules.labels))
            .collect(),
    })
}

#[wasm_bindgen]
pub fn sample_sentences(seed: u32, count: u32) -> Result<String, JsError> {
    sample_sentences_json(seed.into(), count as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn span_rules(
    seed: u32,
    count: u32,
    index: u32,
    start: u32,
    end: u32,
    ngram_max: u32,
) -> Result<String, JsError> {
    span_rules_json(
        seed.into(),
        count as usize,
        index as usize,
        start as usize,
        end as usize,
        ngram_max as usize,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn threshold_explorer(request: &str) -> Result<String, JsError> {
    threshold_explorer_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bootstrap_curve(request: &str) -> Result<String, JsError> {
    bootstrap_curve_json(request).map_err(|e| JsError::new(&e))
}

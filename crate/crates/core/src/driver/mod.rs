//! The bootstrap loop.
//!
//! Each iteration applies the current rules, filters the weak labels into the
//! high-precision set, trains a fresh tagger on that set, ranks its
//! predictions into category members, and admits new rules scored against
//! those members. New rules take effect from the next iteration.

mod config;
mod explain;
mod metrics;
mod output;

use std::collections::HashSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{CandidateId, CandidateIndex};
use crate::corpus::{Corpus, PhraseLexicon, TokenRange};
use crate::learner::{k_schedule, score_candidates, select_new_rules, Members};
use crate::rules::{
    apply_rules, enumerate_rule_candidates, LabelId, PatternIndex, Provenance, Rule, RuleSet,
    RuleSkeleton, TiePolicy,
};
use crate::selection::{seed_high_precision, select_labels, HighPrecisionSet};
use crate::tagger::{
    predict_corpus, top_confident, train_tagger, Example, SpanPrediction, TaggerParams,
};

pub use config::{BootstrapConfig, Decoding};
pub use explain::{explain, Explanation};
pub use metrics::{boundary_prf, f1, gold_spans, micro_prf, Counts, LabeledSpan, Metrics};
pub use output::{execute_run, explain_run, write_explanations, RunManifest, RunPaths, RunWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    SelectLabels,
    Train,
    Output,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Setup => "setup",
            Phase::SelectLabels => "select-labels",
            Phase::Train => "train",
            Phase::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("iteration {iteration}, phase {phase}: {message}")]
pub struct DriverError {
    pub iteration: usize,
    pub phase: Phase,
    pub message: String,
}

impl DriverError {
    pub fn new(iteration: usize, phase: Phase, message: impl fmt::Display) -> Self {
        Self {
            iteration,
            phase,
            message: message.to_string(),
        }
    }
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sentence: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub confidence: f64,
}

impl PredictionRecord {
    pub fn key(&self) -> LabeledSpan {
        LabeledSpan {
            sentence: self.sentence.clone(),
            start: self.start,
            end: self.end,
            label: self.label.clone(),
        }
    }
}

pub fn records_to_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<PredictionRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// A predicted entity over a canonical candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entity {
    pub candidate: CandidateId,
    pub sentence: usize,
    pub range: TokenRange,
    pub label: LabelId,
    pub confidence: f64,
}

/// Resolves overlaps and returns entities sorted by `(sentence, start, end)`.
pub fn decode(mut entities: Vec<Entity>, decoding: Decoding) -> Vec<Entity> {
    if decoding == Decoding::GreedyNonOverlapping {
        entities.sort_by(|a, b| {
            a.sentence
                .cmp(&b.sentence)
                .then(b.confidence.total_cmp(&a.confidence))
                .then(a.range.cmp(&b.range))
        });
        let mut kept: Vec<Entity> = Vec::with_capacity(entities.len());
        let mut sentence_start = 0;
        for e in entities {
            if kept.last().is_some_and(|k| k.sentence != e.sentence) {
                sentence_start = kept.len();
            }
            if kept[sentence_start..]
                .iter()
                .all(|k| !k.range.overlaps(&e.range))
            {
                kept.push(e);
            }
        }
        entities = kept;
    }
    entities.sort_by_key(|e| (e.sentence, e.range));
    entities
}

/// Non-`NEG` tagger predictions, decoded.
pub fn tagger_entities(
    params: &TaggerParams,
    corpus: &Corpus,
    index: &CandidateIndex,
    decoding: Decoding,
) -> Vec<Entity> {
    let preds = predict_corpus(params, corpus, index);
    entities_from_predictions(&preds, params.neg_class(), index, decoding)
}

fn entities_from_predictions(
    preds: &[SpanPrediction],
    neg: usize,
    index: &CandidateIndex,
    decoding: Decoding,
) -> Vec<Entity> {
    let raw = preds
        .iter()
        .filter(|p| p.class != neg)
        .map(|p| {
            let u = index.unit(p.candidate);
            Entity {
                candidate: p.candidate,
                sentence: u.sentence,
                range: u.range,
                label: LabelId(p.class),
                confidence: p.confidence,
            }
        })
        .collect();
    decode(raw, decoding)
}

/// Entities labelled directly by the rule set; confidence is the winning
/// label's share of matching rules.
pub fn rule_entities(
    rules: &RuleSet,
    patterns: &PatternIndex,
    index: &CandidateIndex,
    tie_policy: TiePolicy,
    decoding: Decoding,
) -> Vec<Entity> {
    let raw = apply_rules(rules, patterns, tie_policy)
        .into_iter()
        .map(|w| {
            let u = index.unit(w.candidate);
            Entity {
                candidate: w.candidate,
                sentence: u.sentence,
                range: u.range,
                label: w.label,
                confidence: w.votes[w.label.0] as f64 / w.rule_ids.len() as f64,
            }
        })
        .collect();
    decode(raw, decoding)
}

pub fn to_records(
    entities: &[Entity],
    corpus: &Corpus,
    labels: &[String],
) -> Vec<PredictionRecord> {
    entities
        .iter()
        .map(|e| PredictionRecord {
            sentence: corpus.sentences[e.sentence].id.clone(),
            start: e.range.start,
            end: e.range.end,
            label: labels[e.label.0].clone(),
            confidence: e.confidence,
        })
        .collect()
}

/// A corpus with its candidate and pattern indexes.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub corpus: &'a Corpus,
    pub index: CandidateIndex,
    pub patterns: PatternIndex,
}

impl<'a> Prepared<'a> {
    pub fn new(corpus: &'a Corpus, lexicon: &PhraseLexicon, config: &BootstrapConfig) -> Self {
        let index = CandidateIndex::build(corpus, lexicon, config.max_span_len);
        let patterns = PatternIndex::build(corpus, &index, config.ngram_max);
        Self {
            corpus,
            index,
            patterns,
        }
    }

    /// Predictions in the configured output mode.
    pub fn predict(
        &self,
        params: &TaggerParams,
        rules: &RuleSet,
        config: &BootstrapConfig,
    ) -> Vec<PredictionRecord> {
        let entities = if config.rules_only {
            rule_entities(
                rules,
                &self.patterns,
                &self.index,
                config.tie_policy,
                config.decoding,
            )
        } else {
            tagger_entities(params, self.corpus, &self.index, config.decoding)
        };
        to_records(&entities, self.corpus, &rules.labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub rules_selected: usize,
    pub rules_total: usize,
    pub weak_labels: usize,
    pub accepted_labels: usize,
    /// `|H_i|` per category after this iteration's selection.
    pub high_precision: Vec<usize>,
    pub thresholds: Vec<Option<f64>>,
    pub positives: usize,
    pub negative_pool: usize,
    pub first_epoch_loss: Option<f64>,
    pub last_epoch_loss: Option<f64>,
    pub dev: Option<Metrics>,
    pub wall_ms: u64,
}

/// Receives progress as the loop runs.
pub trait Observer {
    fn on_start(&mut self, _seeds: &RuleSet) -> Result<(), String> {
        Ok(())
    }

    fn on_iteration(
        &mut self,
        _report: &IterationReport,
        _new_rules: &[Rule],
        _labels: &[String],
    ) -> Result<(), String> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Silent;

impl Observer for Silent {}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub rules: RuleSet,
    pub reports: Vec<IterationReport>,
    /// Iteration whose model is exported (best dev F1, else the last).
    pub best_iteration: usize,
    pub best_params: TaggerParams,
    /// Rules in force when the exported model was trained.
    pub best_rules: RuleSet,
    /// Final predictions on the training corpus.
    pub predictions: Vec<PredictionRecord>,
    pub explanations: Vec<Explanation>,
}

fn phase_rng(seed: u64, iteration: usize, phase: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64 * 16 + phase);
    rng
}

#[cfg(not(target_arch = "wasm32"))]
struct Timer(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Timer {
    fn start() -> Self {
        Timer(std::time::Instant::now())
    }

    fn ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

#[cfg(target_arch = "wasm32")]
struct Timer;

#[cfg(target_arch = "wasm32")]
impl Timer {
    fn start() -> Self {
        Timer
    }

    fn ms(&self) -> u64 {
        0
    }
}

pub fn bootstrap(
    config: &BootstrapConfig,
    train: &Corpus,
    dev: Option<&Corpus>,
    seeds: &RuleSet,
    lexicon: &PhraseLexicon,
    observer: &mut dyn Observer,
) -> Result<RunArtifacts, DriverError> {
    let setup = |m: String| DriverError::new(0, Phase::Setup, m);
    config.validate().map_err(setup)?;
    if seeds.is_empty() {
        return Err(setup("no seed rules".into()));
    }
    if train.sentences.is_empty() {
        return Err(setup("training corpus is empty".into()));
    }
    let labels = seeds.labels.clone();
    let num_labels = labels.len();

    let train_p = Prepared::new(train, lexicon, config);
    let dev_p = dev
        .filter(|d| d.has_gold())
        .map(|d| Prepared::new(d, lexicon, config));
    let dev_gold = dev_p.as_ref().map(|d| gold_spans(d.corpus));
    let rule_candidates = enumerate_rule_candidates(train, &train_p.index, config.ngram_max);
    log::info!(
        "{} sentences, {} candidates, {} rule candidates",
        train.sentences.len(),
        train_p.index.len(),
        rule_candidates.len()
    );

    let mut rules = seeds.clone();
    let mut existing: HashSet<RuleSkeleton> =
        rules.rules.iter().map(|r| r.skeleton.clone()).collect();
    let mut high = HighPrecisionSet::new(num_labels);
    let mut prev_preds: Option<Vec<SpanPrediction>> = None;
    let mut last_params: Option<TaggerParams> = None;
    let mut best: Option<(usize, f64, TaggerParams, usize)> = None;
    let mut reports = Vec::with_capacity(config.iterations);
    observer
        .on_start(seeds)
        .map_err(|e| DriverError::new(0, Phase::Output, e))?;

    for t in 1..=config.iterations {
        let timer = Timer::start();
        let err = |phase, m: String| DriverError::new(t, phase, m);

        let weak = apply_rules(&rules, &train_p.patterns, config.tie_policy);
        let (accepted, thresholds) = if t == 1 {
            let acc = seed_high_precision(&weak, train, &train_p.index, &mut high);
            (acc.len(), vec![None; num_labels])
        } else {
            let mut rng = phase_rng(config.seed, t, 1);
            let out = select_labels(
                &weak,
                train,
                &train_p.index,
                &mut high,
                &config.selection,
                t,
                &mut rng,
            )
            .map_err(|e| err(Phase::SelectLabels, e.to_string()))?;
            (out.accepted.len(), out.thresholds)
        };

        let positives: Vec<Example> = high
            .labelled()
            .into_iter()
            .map(|(c, l)| {
                let u = train_p.index.unit(c);
                Example {
                    sentence: u.sentence,
                    range: u.range,
                    class: l.0,
                }
            })
            .collect();
        let pool = negative_pool(
            &train_p.index,
            &high,
            prev_preds.as_deref(),
            num_labels,
            config,
        );
        let mut rng = phase_rng(config.seed, t, 2);
        let init = match (&last_params, config.tagger.warm_start) {
            (Some(p), true) => p.clone(),
            _ => TaggerParams::init(train.dim, &labels, config.tagger, config.seed, &mut rng),
        };
        let (params, train_log) = train_tagger(train, &positives, &pool, init, &mut rng)
            .map_err(|e| err(Phase::Train, e.to_string()))?;

        let preds = predict_corpus(&params, train, &train_p.index);
        let member_lists = top_confident(&preds, config.confident_fraction, num_labels);
        let members = Members::from_lists(&member_lists, train_p.index.len());

        let scored = score_candidates(&rule_candidates, &members);
        let k = k_schedule(config.k0, config.k_growth, t);
        let picked = select_new_rules(
            &scored,
            &rule_candidates,
            config.strategy,
            k,
            config.precision_floor,
            &existing,
        );
        let rules_before = rules.len();
        for s in &picked {
            let skeleton = rule_candidates.skeletons[s.candidate].clone();
            existing.insert(skeleton.clone());
            rules.push(Rule {
                skeleton,
                label: s.label,
                provenance: Provenance::Learned { iteration: t },
                stats: Some(s.stats),
            });
        }

        let dev_metrics = match (&dev_p, &dev_gold) {
            (Some(d), Some(gold)) => {
                let keys: Vec<LabeledSpan> = d
                    .predict(&params, &rules, config)
                    .iter()
                    .map(PredictionRecord::key)
                    .collect();
                Some(micro_prf(&keys, gold))
            }
            _ => None,
        };
        if let Some(m) = &dev_metrics {
            if best.as_ref().is_none_or(|b| m.f1 > b.1) {
                best = Some((t, m.f1, params.clone(), rules.len()));
            }
        }

        let report = IterationReport {
            iteration: t,
            rules_selected: picked.len(),
            rules_total: rules.len(),
            weak_labels: weak.len(),
            accepted_labels: accepted,
            high_precision: high.sizes(),
            thresholds,
            positives: positives.len(),
            negative_pool: pool.len(),
            first_epoch_loss: train_log.epoch_loss.first().copied(),
            last_epoch_loss: train_log.epoch_loss.last().copied(),
            dev: dev_metrics,
            wall_ms: timer.ms(),
        };
        log::info!(
            "iteration {t}: +{} rules ({} total), {} weak, {} accepted, |H| {:?}{}",
            report.rules_selected,
            report.rules_total,
            report.weak_labels,
            report.accepted_labels,
            report.high_precision,
            report
                .dev
                .as_ref()
                .map(|m| format!(
                    ", dev P {:.3} R {:.3} F1 {:.3}",
                    m.precision, m.recall, m.f1
                ))
                .unwrap_or_default()
        );
        observer
            .on_iteration(&report, &rules.rules[rules_before..], &labels)
            .map_err(|e| err(Phase::Output, e))?;
        reports.push(report);
        prev_preds = Some(preds);
        last_params = Some(params);
    }

    let last = config.iterations;
    let (best_iteration, best_params, best_rule_count) = match best {
        Some((t, _, p, n)) => (t, p, n),
        None => (
            last,
            last_params.expect("at least one iteration"),
            rules.len(),
        ),
    };
    let best_rules = RuleSet {
        labels: labels.clone(),
        rules: rules.rules[..best_rule_count].to_vec(),
    };
    let predictions = train_p.predict(&best_params, &best_rules, config);
    let explanations = explain(&predictions, &train_p, &rules);
    Ok(RunArtifacts {
        rules,
        reports,
        best_iteration,
        best_params,
        best_rules,
        predictions,
        explanations,
    })
}

/// Initial negatives plus spans the previous tagger called `NEG` with high
/// confidence, minus anything in the high-precision set.
fn negative_pool(
    index: &CandidateIndex,
    high: &HighPrecisionSet,
    prev: Option<&[SpanPrediction]>,
    num_labels: usize,
    config: &BootstrapConfig,
) -> Vec<Example> {
    let mut ids: Vec<CandidateId> = index.negatives().to_vec();
    if let Some(prev) = prev {
        ids.extend(
            prev.iter()
                .filter(|p| {
                    p.class == num_labels && p.confidence > config.tagger.negative_confidence
                })
                .map(|p| p.candidate),
        );
    }
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .filter(|&c| !high.contains(c))
        .map(|c| {
            let u = index.unit(c);
            Example {
                sentence: u.sentence,
                range: u.range,
                class: num_labels,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ent(sentence: usize, s: usize, e: usize, conf: f64) -> Entity {
        Entity {
            candidate: 0,
            sentence,
            range: TokenRange::new(s, e),
            label: LabelId(0),
            confidence: conf,
        }
    }

    #[test]
    fn greedy_decoding_drops_overlaps() {
        let out = decode(
            vec![
                ent(0, 0, 2, 0.6),
                ent(0, 1, 3, 0.9),
                ent(0, 3, 4, 0.5),
                ent(1, 0, 2, 0.4),
            ],
            Decoding::GreedyNonOverlapping,
        );
        let ranges: Vec<_> = out
            .iter()
            .map(|e| (e.sentence, e.range.start, e.range.end))
            .collect();
        assert_eq!(ranges, vec![(0, 1, 3), (0, 3, 4), (1, 0, 2)]);
    }

    #[test]
    fn all_decoding_keeps_everything() {
        let out = decode(vec![ent(0, 1, 3, 0.9), ent(0, 0, 2, 0.6)], Decoding::All);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].range, TokenRange::new(0, 2));
    }

    #[test]
    fn error_message_names_phase() {
        let e = DriverError::new(3, Phase::Train, "degenerate training set");
        assert_eq!(
            e.to_string(),
            "iteration 3, phase train: degenerate training set"
        );
    }

    #[test]
    fn prediction_line_format() {
        let r = PredictionRecord {
            sentence: "s1".into(),
            start: 4,
            end: 6,
            label: "LOC".into(),
            confidence: 0.5,
        };
        assert_eq!(
            records_to_jsonl(std::slice::from_ref(&r)),
            "{\"sentence\":\"s1\",\"start\":4,\"end\":6,\"label\":\"LOC\",\"confidence\":0.5}\n"
        );
        assert_eq!(
            records_from_jsonl(&records_to_jsonl(std::slice::from_ref(&r))).unwrap(),
            vec![r]
        );
    }
}

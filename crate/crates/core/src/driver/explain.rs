use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{PredictionRecord, Prepared};
use crate::corpus::TokenRange;
use crate::rules::{match_rules, RuleSet};

/// Why an entity was predicted: the rules agreeing with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub sentence: String,
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub span: String,
    pub label: String,
    pub confidence: f64,
    pub rules: Vec<String>,
    /// No rule with this label matches the span.
    pub model_only: bool,
}

/// Pairs each prediction with the rendered rules of its label that match it.
pub fn explain(
    predictions: &[PredictionRecord],
    prepared: &Prepared<'_>,
    rules: &RuleSet,
) -> Vec<Explanation> {
    let corpus = prepared.corpus;
    let by_id: HashMap<&str, usize> = corpus
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let matches = match_rules(rules, &prepared.patterns);
    predictions
        .iter()
        .filter_map(|p| {
            let &si = by_id.get(p.sentence.as_str())?;
            let sentence = &corpus.sentences[si];
            let range = TokenRange::new(p.start, p.end);
            if range.end > sentence.len() || range.is_empty() {
                return None;
            }
            let rendered: Vec<String> = prepared
                .index
                .id_of(si, range)
                .and_then(|c| matches.get(&c))
                .into_iter()
                .flatten()
                .map(|&r| &rules.rules[r])
                .filter(|r| rules.labels[r.label.0] == p.label)
                .map(|r| r.render(&rules.labels))
                .collect();
            Some(Explanation {
                sentence: p.sentence.clone(),
                text: sentence.text(),
                start: p.start,
                end: p.end,
                span: sentence.text_of(range),
                label: p.label.clone(),
                confidence: p.confidence,
                model_only: rendered.is_empty(),
                rules: rendered,
            })
        })
        .collect()
}

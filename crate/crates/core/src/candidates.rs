//! Entity candidates: bounded-length spans, phrase-merged canonical units and
//! initial negatives taken from outside noun chunks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PhraseLexicon, Sentence, TokenRange};

/// Index of a canonical candidate unit inside a [`CandidateIndex`].
pub type CandidateId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanCandidate {
    pub sentence: usize,
    pub span: TokenRange,
    /// Phrase-merged unit containing `span`; equal to `span` when no merge applies.
    pub canonical: TokenRange,
}

/// A canonical candidate: the unit that rules are matched against and the
/// tagger predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidateUnit {
    pub sentence: usize,
    pub range: TokenRange,
}

/// All spans of length `1..=max_span_len`, sorted by `(start, end)`.
pub fn enumerate_spans(sentence: usize, len: usize, max_span_len: usize) -> Vec<SpanCandidate> {
    let mut out = Vec::new();
    for start in 0..len {
        for end in start + 1..=(start + max_span_len).min(len) {
            let span = TokenRange::new(start, end);
            out.push(SpanCandidate {
                sentence,
                span,
                canonical: span,
            });
        }
    }
    out
}

/// Leftmost-longest, non-overlapping lexicon matches over lemmas.
pub fn phrase_matches(sentence: &Sentence, lexicon: &PhraseLexicon) -> Vec<TokenRange> {
    let n = sentence.len();
    let mut out = Vec::new();
    if lexicon.is_empty() {
        return out;
    }
    let mut i = 0;
    while i < n {
        let longest = (2..=lexicon.max_tokens().min(n - i))
            .rev()
            .find(|&l| lexicon.contains(&sentence.lemmas_of(TokenRange::new(i, i + l))));
        match longest {
            Some(l) => {
                out.push(TokenRange::new(i, i + l));
                i += l;
            }
            None => i += 1,
        }
    }
    out
}

/// Canonicalizes every span lying inside a phrase match to the full phrase.
/// Spans are re-derived from their own range, so merging is idempotent.
pub fn merge_phrase_spans(
    spans: &[SpanCandidate],
    lexicon: &PhraseLexicon,
    sentence: &Sentence,
) -> Vec<SpanCandidate> {
    let phrases = phrase_matches(sentence, lexicon);
    spans
        .iter()
        .map(|s| {
            let canonical = phrases
                .iter()
                .find(|p| p.contains(&s.span))
                .copied()
                .unwrap_or(s.span);
            SpanCandidate { canonical, ..*s }
        })
        .collect()
}

/// Enumerated spans sharing no token with any noun chunk.
pub fn initial_negative_spans(
    sentence_idx: usize,
    sentence: &Sentence,
    max_span_len: usize,
) -> Vec<SpanCandidate> {
    enumerate_spans(sentence_idx, sentence.len(), max_span_len)
        .into_iter()
        .filter(|s| !overlaps_chunk(sentence, s.span))
        .collect()
}

fn overlaps_chunk(sentence: &Sentence, r: TokenRange) -> bool {
    sentence.noun_chunks.iter().any(|c| c.overlaps(&r))
}

/// Candidate spans and canonical units of a whole corpus.
#[derive(Debug, Clone)]
pub struct CandidateIndex {
    spans: Vec<Vec<SpanCandidate>>,
    units: Vec<CandidateUnit>,
    lookup: HashMap<CandidateUnit, CandidateId>,
    negatives: Vec<CandidateId>,
}

impl CandidateIndex {
    pub fn build(corpus: &Corpus, lexicon: &PhraseLexicon, max_span_len: usize) -> Self {
        let mut spans = Vec::with_capacity(corpus.sentences.len());
        let mut units = Vec::new();
        let mut negative_units = Vec::new();
        for (si, sentence) in corpus.sentences.iter().enumerate() {
            let raw = enumerate_spans(si, sentence.len(), max_span_len);
            let merged = merge_phrase_spans(&raw, lexicon, sentence);
            let mut sentence_units: Vec<TokenRange> = merged.iter().map(|s| s.canonical).collect();
            sentence_units.sort();
            sentence_units.dedup();
            for s in &merged {
                if !overlaps_chunk(sentence, s.span) && !overlaps_chunk(sentence, s.canonical) {
                    negative_units.push(CandidateUnit {
                        sentence: si,
                        range: s.canonical,
                    });
                }
            }
            units.extend(sentence_units.into_iter().map(|range| CandidateUnit {
                sentence: si,
                range,
            }));
            spans.push(merged);
        }
        let lookup: HashMap<_, _> = units.iter().enumerate().map(|(i, u)| (*u, i)).collect();
        let mut negatives: Vec<CandidateId> = negative_units.iter().map(|u| lookup[u]).collect();
        negatives.sort_unstable();
        negatives.dedup();
        Self {
            spans,
            units,
            lookup,
            negatives,
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn unit(&self, id: CandidateId) -> CandidateUnit {
        self.units[id]
    }

    pub fn units(&self) -> &[CandidateUnit] {
        &self.units
    }

    pub fn id_of(&self, sentence: usize, range: TokenRange) -> Option<CandidateId> {
        self.lookup.get(&CandidateUnit { sentence, range }).copied()
    }

    /// Canonical unit for an enumerated span.
    pub fn canonical_of(&self, sentence: usize, span: TokenRange) -> Option<CandidateId> {
        let spans = self.spans.get(sentence)?;
        let s = spans.iter().find(|s| s.span == span)?;
        self.id_of(sentence, s.canonical)
    }

    pub fn spans(&self, sentence: usize) -> &[SpanCandidate] {
        &self.spans[sentence]
    }

    /// Canonical units derived from initial negative spans (sorted ids).
    pub fn negatives(&self) -> &[CandidateId] {
        &self.negatives
    }
}

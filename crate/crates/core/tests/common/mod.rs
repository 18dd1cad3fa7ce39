//! Random fixtures and a brute-force rule matcher shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use spanrules_core::corpus::{Corpus, Sentence, TokenRange, TokenRecord};
use spanrules_core::rules::{
    LabelId, Predicate, Provenance, Rule, RuleSet, RuleSkeleton, SimplePattern, TiePolicy,
};

pub const VOCAB: [&str; 9] = [
    "the", "of", "drug", "cell", "induce", "by", "in", "high", "dose",
];
pub const TAGS: [&str; 5] = ["NOUN", "VERB", "ADJ", "DET", "ADP"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A sentence over a tiny vocabulary so patterns collide often. Heads point
/// leftwards, which keeps the tree acyclic; token 0 is the root.
pub fn random_sentence(rng: &mut impl Rng, id: String, max_tokens: usize, dim: usize) -> Sentence {
    let n = rng.gen_range(1..=max_tokens);
    let tokens: Vec<TokenRecord> = (0..n)
        .map(|i| {
            let lemma = VOCAB[rng.gen_range(0..VOCAB.len())].to_string();
            let text = if rng.gen_bool(0.2) {
                lemma.to_uppercase()
            } else {
                lemma.clone()
            };
            TokenRecord {
                text,
                lemma,
                pos: TAGS[rng.gen_range(0..TAGS.len())].to_string(),
                head: if i == 0 {
                    -1
                } else {
                    rng.gen_range(0..i) as i64
                },
                deprel: "dep".into(),
                embedding: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            }
        })
        .collect();
    let mut noun_chunks = Vec::new();
    let mut i = 0;
    while i < n {
        if rng.gen_bool(0.3) {
            let end = (i + rng.gen_range(1..=3)).min(n);
            noun_chunks.push(TokenRange::new(i, end));
            i = end + 1;
        } else {
            i += 1;
        }
    }
    Sentence {
        id,
        tokens,
        noun_chunks,
        gold: None,
    }
}

pub fn random_corpus(rng: &mut impl Rng, max_sentences: usize, max_tokens: usize) -> Corpus {
    let dim = 4;
    let n = rng.gen_range(1..=max_sentences);
    let sentences = (0..n)
        .map(|i| random_sentence(rng, format!("r{i}"), max_tokens, dim))
        .collect();
    Corpus::new(dim, sentences)
}

fn lemmas(s: &Sentence, from: usize, to: usize) -> String {
    s.tokens[from..to]
        .iter()
        .map(|t| t.lemma.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn tags(s: &Sentence, r: TokenRange) -> String {
    s.tokens[r.start..r.end]
        .iter()
        .map(|t| t.pos.to_uppercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn head(s: &Sentence, i: usize) -> Option<usize> {
    let h = s.tokens[i].head;
    (h >= 0 && (h as usize) < s.len() && h as usize != i).then_some(h as usize)
}

/// Checks one simple pattern by scanning the sentence directly.
pub fn naive_holds(p: &SimplePattern, s: &Sentence, r: TokenRange, ngram_max: usize) -> bool {
    let want = p.pattern.as_str();
    match p.predicate {
        Predicate::TokenString => lemmas(s, r.start, r.end) == want,
        Predicate::PreNgram => {
            (1..=ngram_max.min(r.start)).any(|k| lemmas(s, r.start - k, r.start) == want)
        }
        Predicate::PostNgram => {
            (1..=ngram_max.min(s.len() - r.end)).any(|k| lemmas(s, r.end, r.end + k) == want)
        }
        Predicate::PosTag => tags(s, r) == want,
        Predicate::DependencyRel => match head(s, r.end - 1) {
            None => false,
            Some(g1) => {
                let l1 = &s.tokens[g1].lemma;
                l1 == want
                    || head(s, g1)
                        .is_some_and(|g2| format!("{}||{}", s.tokens[g2].lemma, l1) == want)
            }
        },
    }
}

/// `(sentence, start, end) -> (label, rule ids, votes)` for every span of
/// length `<= max_len` that some rule matches and that wins the vote.
pub type NaiveLabels = BTreeMap<(usize, usize, usize), (usize, Vec<usize>, Vec<usize>)>;

pub fn naive_apply(
    rules: &RuleSet,
    corpus: &Corpus,
    max_len: usize,
    ngram_max: usize,
    tie: TiePolicy,
) -> NaiveLabels {
    let mut out = BTreeMap::new();
    for (si, s) in corpus.sentences.iter().enumerate() {
        for start in 0..s.len() {
            for end in start + 1..=(start + max_len).min(s.len()) {
                let r = TokenRange::new(start, end);
                let ids: Vec<usize> = rules
                    .rules
                    .iter()
                    .enumerate()
                    .filter(|(_, rule)| {
                        rule.skeleton
                            .conjuncts()
                            .iter()
                            .all(|c| naive_holds(c, s, r, ngram_max))
                    })
                    .map(|(i, _)| i)
                    .collect();
                if ids.is_empty() {
                    continue;
                }
                let mut votes = vec![0usize; rules.labels.len()];
                for &i in &ids {
                    votes[rules.rules[i].label.0] += 1;
                }
                let best = *votes.iter().max().unwrap();
                let winners: Vec<usize> = (0..votes.len()).filter(|&l| votes[l] == best).collect();
                let label = match (winners.len(), tie) {
                    (1, _) => winners[0],
                    (_, TiePolicy::Abstain) => continue,
                    (_, TiePolicy::FirstByRuleId) => {
                        let first = ids
                            .iter()
                            .find(|&&i| winners.contains(&rules.rules[i].label.0));
                        rules.rules[*first.unwrap()].label.0
                    }
                };
                out.insert((si, start, end), (label, ids, votes));
            }
        }
    }
    out
}

/// Patterns of `predicate` that a span exhibits, derived by scanning.
fn patterns_of(predicate: Predicate, s: &Sentence, r: TokenRange, ngram_max: usize) -> Vec<String> {
    match predicate {
        Predicate::TokenString => vec![lemmas(s, r.start, r.end)],
        Predicate::PreNgram => (1..=ngram_max.min(r.start))
            .map(|k| lemmas(s, r.start - k, r.start))
            .collect(),
        Predicate::PostNgram => (1..=ngram_max.min(s.len() - r.end))
            .map(|k| lemmas(s, r.end, r.end + k))
            .collect(),
        Predicate::PosTag => vec![tags(s, r)],
        Predicate::DependencyRel => {
            let mut v = Vec::new();
            if let Some(g1) = head(s, r.end - 1) {
                v.push(s.tokens[g1].lemma.clone());
                if let Some(g2) = head(s, g1) {
                    v.push(format!("{}||{}", s.tokens[g2].lemma, s.tokens[g1].lemma));
                }
            }
            v
        }
    }
}

fn random_pattern(
    rng: &mut impl Rng,
    corpus: &Corpus,
    predicate: Predicate,
    ngram_max: usize,
) -> SimplePattern {
    let s = &corpus.sentences[rng.gen_range(0..corpus.sentences.len())];
    let start = rng.gen_range(0..s.len());
    let end = rng.gen_range(start + 1..=(start + 3).min(s.len()));
    let found = patterns_of(predicate, s, TokenRange::new(start, end), ngram_max);
    match found.choose(rng) {
        Some(p) if rng.gen_bool(0.9) => SimplePattern::new(predicate, p),
        // occasionally a pattern drawn from the vocabulary, which may match nothing
        _ => SimplePattern::new(predicate, VOCAB[rng.gen_range(0..VOCAB.len())]),
    }
}

const PAIRS: [(Predicate, Predicate); 4] = [
    (Predicate::PreNgram, Predicate::PostNgram),
    (Predicate::PreNgram, Predicate::PosTag),
    (Predicate::PosTag, Predicate::PostNgram),
    (Predicate::DependencyRel, Predicate::PosTag),
];

const SINGLES: [Predicate; 5] = [
    Predicate::TokenString,
    Predicate::PreNgram,
    Predicate::PostNgram,
    Predicate::PosTag,
    Predicate::DependencyRel,
];

/// Rules mixing all five singleton predicates and the four compound pairs.
pub fn random_rules(
    rng: &mut impl Rng,
    corpus: &Corpus,
    count: usize,
    labels: usize,
    ngram_max: usize,
) -> RuleSet {
    let mut rules = RuleSet::default();
    for l in 0..labels {
        rules.intern_label(&format!("L{l}"));
    }
    for _ in 0..count {
        let skeleton = if rng.gen_bool(0.4) {
            let p = SINGLES[rng.gen_range(0..SINGLES.len())];
            RuleSkeleton::single(random_pattern(rng, corpus, p, ngram_max))
        } else {
            let (a, b) = PAIRS[rng.gen_range(0..PAIRS.len())];
            let pa = random_pattern(rng, corpus, a, ngram_max);
            let pb = random_pattern(rng, corpus, b, ngram_max);
            RuleSkeleton::pair(pa, pb).expect("allowed pair")
        };
        rules.push(Rule {
            skeleton,
            label: LabelId(rng.gen_range(0..labels)),
            provenance: Provenance::Seed,
            stats: None,
        });
    }
    rules
}

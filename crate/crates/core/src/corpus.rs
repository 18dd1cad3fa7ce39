//! Preprocessed corpus, phrase lexicon and seed-rule loading.
//!
//! The corpus is JSON Lines. The first line is a header
//! `{"format":"tallor-corpus","version":1,"dim":D}`; every following line is
//! one sentence with inline per-token embeddings. All ranges are half-open.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{Predicate, Provenance, Rule, RuleSet, RuleSkeleton, SimplePattern};

pub const FORMAT_NAME: &str = "tallor-corpus";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: bad header: {message}")]
    Header { line: usize, message: String },
    #[error("line {line}: sentence {id}: token {token} has embedding of length {found}, expected dimension {expected}")]
    DimensionMismatch {
        line: usize,
        id: String,
        token: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}: sentence {id}: invalid head index {head} for token {token}")]
    InvalidHead {
        line: usize,
        id: String,
        token: usize,
        head: i64,
    },
    #[error("line {line}: sentence {id}: overlapping noun chunks [{a_start},{a_end}) and [{b_start},{b_end})")]
    OverlappingChunks {
        line: usize,
        id: String,
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },
    #[error("line {line}: sentence {id}: range [{start},{end}) outside 0..{len}")]
    RangeOutOfBounds {
        line: usize,
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("line {line}: sentence {id}: token {token} has an empty lemma")]
    EmptyLemma {
        line: usize,
        id: String,
        token: usize,
    },
    #[error("line {line}: duplicate sentence id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("seed rule {index}: unknown predicate type {name:?}")]
    UnknownPredicate { index: usize, name: String },
    #[error("seed rule {index}: unknown label {label:?}")]
    UnknownLabel { index: usize, label: String },
    #[error("seed rule {index}: empty pattern")]
    EmptyPattern { index: usize },
    #[error("seed rules: {0}")]
    SeedFormat(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Half-open token range `[start, end)`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct TokenRange {
    pub start: usize,
    pub end: usize,
}

impl TokenRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &TokenRange) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &TokenRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<[usize; 2]> for TokenRange {
    fn from(v: [usize; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<TokenRange> for [usize; 2] {
    fn from(r: TokenRange) -> Self {
        [r.start, r.end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub text: String,
    pub lemma: String,
    pub pos: String,
    /// Governor index within the sentence, `-1` for the root.
    pub head: i64,
    pub deprel: String,
    #[serde(rename = "emb")]
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldEntity {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<TokenRecord>,
    #[serde(default)]
    pub noun_chunks: Vec<TokenRange>,
    #[serde(rename = "entities", default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<GoldEntity>>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined surface text of a token range.
    pub fn text_of(&self, range: TokenRange) -> String {
        join(
            self.tokens[range.start..range.end]
                .iter()
                .map(|t| t.text.as_str()),
        )
    }

    pub fn lemmas_of(&self, range: TokenRange) -> String {
        join(
            self.tokens[range.start..range.end]
                .iter()
                .map(|t| t.lemma.as_str()),
        )
    }

    pub fn text(&self) -> String {
        self.text_of(TokenRange::new(0, self.len()))
    }

    /// Governor of token `i`, if it has one.
    pub fn governor(&self, i: usize) -> Option<usize> {
        let head = self.tokens.get(i)?.head;
        (head >= 0).then_some(head as usize)
    }
}

fn join<'a>(words: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, w) in words.enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
}

/// A loaded, validated corpus. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dim: usize,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(dim: usize, sentences: Vec<Sentence>) -> Self {
        Self { dim, sentences }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn has_gold(&self) -> bool {
        self.sentences.iter().any(|s| s.gold.is_some())
    }

    pub fn sentence_index(&self, id: &str) -> Option<usize> {
        self.sentences.iter().position(|s| s.id == id)
    }

    /// Parses and validates JSONL text.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => {
                    return Err(CorpusError::Header {
                        line: 1,
                        message: "missing header".into(),
                    })
                }
                Some((i, line)) => {
                    let line = line.map_err(|e| CorpusError::Malformed {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break parse_header(&line, i + 1)?;
                }
            }
        };

        let mut sentences = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| CorpusError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut sentence: Sentence =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })?;
            check_sentence(&mut sentence, header.dim, lineno)?;
            if !ids.insert(sentence.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    line: lineno,
                    id: sentence.id,
                });
            }
            sentences.push(sentence);
        }
        log::debug!(
            "loaded corpus: {} sentences, {} tokens, dim {}",
            sentences.len(),
            sentences.iter().map(Sentence::len).sum::<usize>(),
            header.dim
        );
        Ok(Self {
            dim: header.dim,
            sentences,
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::parse(text.as_bytes())
    }

    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dim: self.dim,
        };
        writeln!(writer, "{}", serde_json::to_string(&header)?)?;
        for s in &self.sentences {
            writeln!(writer, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<Header> {
    let header: Header = serde_json::from_str(line).map_err(|e| CorpusError::Header {
        line: lineno,
        message: e.to_string(),
    })?;
    if header.format != FORMAT_NAME {
        return Err(CorpusError::Header {
            line: lineno,
            message: format!("unknown format {:?}", header.format),
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(CorpusError::Header {
            line: lineno,
            message: format!("unsupported version {}", header.version),
        });
    }
    if header.dim == 0 {
        return Err(CorpusError::Header {
            line: lineno,
            message: "embedding dimension must be positive".into(),
        });
    }
    Ok(header)
}

fn check_sentence(s: &mut Sentence, dim: usize, line: usize) -> Result<()> {
    let n = s.tokens.len();
    for (i, tok) in s.tokens.iter_mut().enumerate() {
        if tok.embedding.len() != dim {
            return Err(CorpusError::DimensionMismatch {
                line,
                id: s.id.clone(),
                token: i,
                found: tok.embedding.len(),
                expected: dim,
            });
        }
        if tok.head < -1 || tok.head >= n as i64 || tok.head == i as i64 {
            return Err(CorpusError::InvalidHead {
                line,
                id: s.id.clone(),
                token: i,
                head: tok.head,
            });
        }
        if tok.lemma.trim().is_empty() {
            return Err(CorpusError::EmptyLemma {
                line,
                id: s.id.clone(),
                token: i,
            });
        }
        tok.lemma = tok.lemma.to_lowercase();
    }

    let bad_range = |r: TokenRange| r.start >= r.end || r.end > n;
    for r in &s.noun_chunks {
        if bad_range(*r) {
            return Err(CorpusError::RangeOutOfBounds {
                line,
                id: s.id.clone(),
                start: r.start,
                end: r.end,
                len: n,
            });
        }
    }
    s.noun_chunks.sort();
    for w in s.noun_chunks.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(CorpusError::OverlappingChunks {
                line,
                id: s.id.clone(),
                a_start: w[0].start,
                a_end: w[0].end,
                b_start: w[1].start,
                b_end: w[1].end,
            });
        }
    }
    if let Some(gold) = &s.gold {
        for g in gold {
            if bad_range(TokenRange::new(g.start, g.end)) {
                return Err(CorpusError::RangeOutOfBounds {
                    line,
                    id: s.id.clone(),
                    start: g.start,
                    end: g.end,
                    len: n,
                });
            }
        }
    }
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::parse(BufReader::new(file))
}

/// Diagnostic summary of a corpus. Never fails; `passed` carries the verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub sentences: usize,
    pub tokens: usize,
    pub dim: usize,
    pub dim_consistent: bool,
    pub gold_present: bool,
    pub gold_per_label: BTreeMap<String, usize>,
    pub violations: Vec<String>,
    pub passed: bool,
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut violations = Vec::new();
    let mut gold_per_label = BTreeMap::new();
    let mut dim_consistent = true;
    for s in &corpus.sentences {
        let n = s.len();
        for (i, t) in s.tokens.iter().enumerate() {
            if t.embedding.len() != corpus.dim {
                dim_consistent = false;
                violations.push(format!(
                    "{}: token {i} embedding length {} != {}",
                    s.id,
                    t.embedding.len(),
                    corpus.dim
                ));
            }
            if t.head < -1 || t.head >= n as i64 || t.head == i as i64 {
                violations.push(format!("{}: token {i} invalid head index {}", s.id, t.head));
            }
        }
        for r in &s.noun_chunks {
            if r.start >= r.end || r.end > n {
                violations.push(format!(
                    "{}: noun chunk [{},{}) out of bounds",
                    s.id, r.start, r.end
                ));
            }
        }
        if let Some(gold) = &s.gold {
            for g in gold {
                if g.start >= g.end || g.end > n {
                    violations.push(format!(
                        "{}: gold range [{},{}) out of bounds (len {n})",
                        s.id, g.start, g.end
                    ));
                }
                *gold_per_label.entry(g.label.clone()).or_insert(0) += 1;
            }
        }
    }
    ValidationReport {
        sentences: corpus.sentences.len(),
        tokens: corpus.token_count(),
        dim: corpus.dim,
        dim_consistent,
        gold_present: corpus.has_gold(),
        gold_per_label,
        passed: violations.is_empty(),
        violations,
    }
}

/// Lowercased, lemmatized multi-token phrases (space-joined).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhraseLexicon {
    phrases: BTreeSet<String>,
    max_tokens: usize,
}

impl PhraseLexicon {
    /// Builds a lexicon from raw lines. Returns the line numbers (1-based) of
    /// single-token entries that were skipped.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> (Self, Vec<usize>) {
        let mut lex = Self::default();
        let mut skipped = Vec::new();
        for (i, line) in lines.into_iter().enumerate() {
            let norm = normalize_words(line).to_lowercase();
            if norm.is_empty() {
                continue;
            }
            let n = norm.split(' ').count();
            if n < 2 {
                log::warn!(
                    "phrase lexicon line {}: single-token entry {norm:?} skipped",
                    i + 1
                );
                skipped.push(i + 1);
                continue;
            }
            lex.max_tokens = lex.max_tokens.max(n);
            lex.phrases.insert(norm);
        }
        (lex, skipped)
    }

    pub fn insert(&mut self, phrase: &str) -> bool {
        let norm = normalize_words(phrase).to_lowercase();
        let n = norm.split(' ').count();
        if norm.is_empty() || n < 2 {
            return false;
        }
        self.max_tokens = self.max_tokens.max(n);
        self.phrases.insert(norm)
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.phrases.contains(phrase)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Longest phrase length in tokens (0 when empty).
    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().map(String::as_str)
    }
}

pub fn load_phrase_lexicon(path: impl AsRef<Path>) -> Result<PhraseLexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(PhraseLexicon::from_lines(text.lines()).0)
}

fn normalize_words(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Deserialize)]
struct SeedRecord {
    #[serde(rename = "type")]
    kind: String,
    pattern: String,
    label: String,
}

/// Parses a seed-rule JSON array. The label set of the run is the set of
/// seed labels, in order of first appearance.
pub fn parse_seed_rules(text: &str) -> Result<RuleSet> {
    let records: Vec<SeedRecord> =
        serde_json::from_str(text).map_err(|e| CorpusError::SeedFormat(e.to_string()))?;
    let mut set = RuleSet::default();
    for (index, rec) in records.into_iter().enumerate() {
        let predicate =
            Predicate::from_name(&rec.kind).ok_or_else(|| CorpusError::UnknownPredicate {
                index,
                name: rec.kind.clone(),
            })?;
        let label = rec.label.trim();
        if label.is_empty() {
            return Err(CorpusError::UnknownLabel {
                index,
                label: rec.label,
            });
        }
        let pattern = SimplePattern::new(predicate, &rec.pattern);
        if pattern.pattern.is_empty() {
            return Err(CorpusError::EmptyPattern { index });
        }
        let label = set.intern_label(label);
        set.push(Rule {
            skeleton: RuleSkeleton::single(pattern),
            label,
            provenance: Provenance::Seed,
            stats: None,
        });
    }
    Ok(set)
}

/// Inverse of [`parse_seed_rules`] for singleton rules; compound rules are skipped.
pub fn seed_rules_to_json(rules: &RuleSet) -> String {
    let records: Vec<serde_json::Value> = rules
        .rules
        .iter()
        .filter_map(|r| match r.skeleton.conjuncts() {
            [p] => Some(serde_json::json!({
                "type": p.predicate.name(),
                "pattern": p.pattern,
                "label": rules.labels[r.label.0],
            })),
            _ => None,
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("seed records serialize") + "\n"
}

pub fn load_seed_rules(path: impl AsRef<Path>) -> Result<RuleSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_seed_rules(&text)
}

//! Logical rules: simple predicate patterns, compound conjunctions, matching
//! and majority-vote weak labelling.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{CandidateId, CandidateIndex};
use crate::corpus::{Corpus, Sentence, TokenRange};
use crate::learner::RuleStats;

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("unknown predicate type {0:?}")]
    UnknownPredicate(String),
    #[error("rule must have one or two conjuncts, got {0}")]
    Arity(usize),
    #[error("conjunct pair {0} ∧ {1} is not an allowed compound type")]
    DisallowedPair(Predicate, Predicate),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predicate {
    TokenString,
    PreNgram,
    PostNgram,
    #[serde(rename = "POSTag")]
    PosTag,
    DependencyRel,
}

impl Predicate {
    pub const ALL: [Predicate; 5] = [
        Predicate::TokenString,
        Predicate::PreNgram,
        Predicate::PostNgram,
        Predicate::PosTag,
        Predicate::DependencyRel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::TokenString => "TokenString",
            Predicate::PreNgram => "PreNgram",
            Predicate::PostNgram => "PostNgram",
            Predicate::PosTag => "POSTag",
            Predicate::DependencyRel => "DependencyRel",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One `(predicate, pattern)` condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimplePattern {
    #[serde(rename = "type")]
    pub predicate: Predicate,
    pub pattern: String,
}

impl SimplePattern {
    /// Normalizes `raw`: lexical predicates are lowercased, POS tags uppercased,
    /// whitespace collapsed.
    pub fn new(predicate: Predicate, raw: &str) -> Self {
        let words = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        let pattern = match predicate {
            Predicate::PosTag => words.to_uppercase(),
            _ => words.to_lowercase(),
        };
        Self { predicate, pattern }
    }
}

impl fmt::Display for SimplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.predicate {
            Predicate::PosTag => write!(f, "{}={}", self.predicate, self.pattern),
            _ => write!(f, "{}=\"{}\"", self.predicate, self.pattern),
        }
    }
}

/// The compound types a learned rule may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleType {
    TokenString,
    PreNgramPostNgram,
    PreNgramPosTag,
    PosTagPostNgram,
    DependencyRelPosTag,
}

impl RuleType {
    pub const ALL: [RuleType; 5] = [
        RuleType::TokenString,
        RuleType::PreNgramPostNgram,
        RuleType::PreNgramPosTag,
        RuleType::PosTagPostNgram,
        RuleType::DependencyRelPosTag,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RuleType::TokenString => "Surface",
            RuleType::PreNgramPostNgram => "Pre+Post",
            RuleType::PreNgramPosTag => "Pre+POS",
            RuleType::PosTagPostNgram => "POS+Post",
            RuleType::DependencyRelPosTag => "Dep+POS",
        }
    }

    fn of_pair(a: Predicate, b: Predicate) -> Option<RuleType> {
        use Predicate::*;
        match (a, b) {
            (PreNgram, PostNgram) => Some(RuleType::PreNgramPostNgram),
            (PreNgram, PosTag) => Some(RuleType::PreNgramPosTag),
            (PosTag, PostNgram) => Some(RuleType::PosTagPostNgram),
            (DependencyRel, PosTag) => Some(RuleType::DependencyRelPosTag),
            _ => None,
        }
    }
}

/// Unlabelled conjunction of one or two simple patterns, kept in a canonical
/// conjunct order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSkeleton(Vec<SimplePattern>);

impl RuleSkeleton {
    pub fn single(p: SimplePattern) -> Self {
        Self(vec![p])
    }

    /// Builds a pair in canonical order, or `None` if the pair type is not allowed.
    pub fn pair(a: SimplePattern, b: SimplePattern) -> Option<Self> {
        if RuleType::of_pair(a.predicate, b.predicate).is_some() {
            Some(Self(vec![a, b]))
        } else if RuleType::of_pair(b.predicate, a.predicate).is_some() {
            Some(Self(vec![b, a]))
        } else {
            None
        }
    }

    pub fn new(mut conjuncts: Vec<SimplePattern>) -> Result<Self, RuleError> {
        match conjuncts.len() {
            1 => Ok(Self(conjuncts)),
            2 => {
                let b = conjuncts.pop().unwrap();
                let a = conjuncts.pop().unwrap();
                let (pa, pb) = (a.predicate, b.predicate);
                Self::pair(a, b).ok_or(RuleError::DisallowedPair(pa, pb))
            }
            n => Err(RuleError::Arity(n)),
        }
    }

    pub fn conjuncts(&self) -> &[SimplePattern] {
        &self.0
    }

    /// `None` for single-conjunct rules other than TokenString (seed-only shapes).
    pub fn rule_type(&self) -> Option<RuleType> {
        match self.0.as_slice() {
            [p] if p.predicate == Predicate::TokenString => Some(RuleType::TokenString),
            [a, b] => RuleType::of_pair(a.predicate, b.predicate),
            _ => None,
        }
    }
}

impl fmt::Display for RuleSkeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∧ ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Seed,
    Learned { iteration: usize },
}

impl Provenance {
    pub fn iteration(self) -> usize {
        match self {
            Provenance::Seed => 0,
            Provenance::Learned { iteration } => iteration,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub skeleton: RuleSkeleton,
    pub label: LabelId,
    pub provenance: Provenance,
    pub stats: Option<RuleStats>,
}

impl Rule {
    /// `Predicate="pattern" ∧ Predicate="pattern" → Label`, with a `(seed)` suffix
    /// for seeds. POS patterns are left unquoted.
    pub fn render(&self, labels: &[String]) -> String {
        let mut s = format!("{} → {}", self.skeleton, labels[self.label.0]);
        if self.provenance == Provenance::Seed {
            s.push_str(" (seed)");
        }
        s
    }
}

/// Ordered rule list; a rule's id is its position. Labels are interned in
/// order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    pub labels: Vec<String>,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn intern_label(&mut self, label: &str) -> LabelId {
        match self.labels.iter().position(|l| l == label) {
            Some(i) => LabelId(i),
            None => {
                self.labels.push(label.to_string());
                LabelId(self.labels.len() - 1)
            }
        }
    }

    pub fn label_id(&self, label: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l == label).map(LabelId)
    }

    pub fn push(&mut self, rule: Rule) {
        self.rules.push(rule);
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn seeds(&self) -> RuleSet {
        RuleSet {
            labels: self.labels.clone(),
            rules: self
                .rules
                .iter()
                .filter(|r| r.provenance == Provenance::Seed)
                .cloned()
                .collect(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&rule_record_line(r, &self.labels));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RuleError> {
        let mut set = RuleSet::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RuleRecord = serde_json::from_str(line).map_err(|e| RuleError::Record {
                line: i + 1,
                message: e.to_string(),
            })?;
            let conjuncts = rec
                .conjuncts
                .into_iter()
                .map(|c| SimplePattern::new(c.predicate, &c.pattern))
                .collect();
            let skeleton = RuleSkeleton::new(conjuncts).map_err(|e| RuleError::Record {
                line: i + 1,
                message: e.to_string(),
            })?;
            let label = set.intern_label(&rec.label);
            let provenance = if rec.iteration == 0 {
                Provenance::Seed
            } else {
                Provenance::Learned {
                    iteration: rec.iteration,
                }
            };
            let stats = match (rec.matches, rec.precision) {
                (Some(f), Some(p)) if p > 0.0 => Some(RuleStats {
                    f,
                    n: (f as f64 / p).round() as usize,
                }),
                _ => None,
            };
            set.push(Rule {
                skeleton,
                label,
                provenance,
                stats,
            });
        }
        Ok(set)
    }
}

/// Wire form of one rule in `rules.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleRecord {
    pub iteration: usize,
    pub label: String,
    pub conjuncts: Vec<SimplePattern>,
    pub score: Option<f64>,
    pub precision: Option<f64>,
    pub matches: Option<usize>,
}

pub fn rule_record_line(rule: &Rule, labels: &[String]) -> String {
    let rec = RuleRecord {
        iteration: rule.provenance.iteration(),
        label: labels[rule.label.0].clone(),
        conjuncts: rule.skeleton.conjuncts().to_vec(),
        score: rule.stats.map(|s| s.score()).filter(|s| s.is_finite()),
        precision: rule.stats.map(|s| s.precision()),
        matches: rule.stats.map(|s| s.f),
    };
    serde_json::to_string(&rec).expect("rule record serializes")
}

/// Patterns a candidate exhibits, per predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePatterns {
    pub token_string: String,
    /// Preceding n-grams, shortest first.
    pub pre: Vec<String>,
    /// Following n-grams, shortest first.
    pub post: Vec<String>,
    pub pos: String,
    /// Depth-1 governor lemma, then `depth2||depth1` when present.
    pub dep: Vec<String>,
}

impl CandidatePatterns {
    pub fn extract(sentence: &Sentence, range: TokenRange, ngram_max: usize) -> Self {
        let n = sentence.len();
        let lemma = |i: usize| sentence.tokens[i].lemma.as_str();
        let pre = (1..=ngram_max)
            .filter(|&k| k <= range.start)
            .map(|k| sentence.lemmas_of(TokenRange::new(range.start - k, range.start)))
            .collect();
        let post = (1..=ngram_max)
            .filter(|&k| range.end + k <= n)
            .map(|k| sentence.lemmas_of(TokenRange::new(range.end, range.end + k)))
            .collect();
        let pos = sentence.tokens[range.start..range.end]
            .iter()
            .map(|t| t.pos.to_uppercase())
            .collect::<Vec<_>>()
            .join(" ");
        // head word of a span is its last token
        let mut dep = Vec::new();
        if let Some(g1) = sentence.governor(range.end - 1) {
            dep.push(lemma(g1).to_string());
            if let Some(g2) = sentence.governor(g1) {
                dep.push(format!("{}||{}", lemma(g2), lemma(g1)));
            }
        }
        Self {
            token_string: sentence.lemmas_of(range),
            pre,
            post,
            pos,
            dep,
        }
    }

    pub fn patterns(&self) -> Vec<SimplePattern> {
        let mk = |predicate, pattern: &String| SimplePattern {
            predicate,
            pattern: pattern.clone(),
        };
        let mut out = vec![mk(Predicate::TokenString, &self.token_string)];
        out.extend(self.pre.iter().map(|p| mk(Predicate::PreNgram, p)));
        out.extend(self.post.iter().map(|p| mk(Predicate::PostNgram, p)));
        out.push(mk(Predicate::PosTag, &self.pos));
        out.extend(self.dep.iter().map(|p| mk(Predicate::DependencyRel, p)));
        out
    }

    pub fn has(&self, p: &SimplePattern) -> bool {
        match p.predicate {
            Predicate::TokenString => self.token_string == p.pattern,
            Predicate::PreNgram => self.pre.contains(&p.pattern),
            Predicate::PostNgram => self.post.contains(&p.pattern),
            Predicate::PosTag => self.pos == p.pattern,
            Predicate::DependencyRel => self.dep.contains(&p.pattern),
        }
    }

    /// All rule skeletons this candidate can generate: the TokenString
    /// singleton plus the cross products of the allowed pair types.
    pub fn skeletons(&self) -> Vec<RuleSkeleton> {
        let pat = |predicate, pattern: &String| SimplePattern {
            predicate,
            pattern: pattern.clone(),
        };
        let pos = pat(Predicate::PosTag, &self.pos);
        let mut out = vec![RuleSkeleton::single(pat(
            Predicate::TokenString,
            &self.token_string,
        ))];
        for pre in &self.pre {
            for post in &self.post {
                out.push(RuleSkeleton(vec![
                    pat(Predicate::PreNgram, pre),
                    pat(Predicate::PostNgram, post),
                ]));
            }
            out.push(RuleSkeleton(vec![
                pat(Predicate::PreNgram, pre),
                pos.clone(),
            ]));
        }
        for post in &self.post {
            out.push(RuleSkeleton(vec![
                pos.clone(),
                pat(Predicate::PostNgram, post),
            ]));
        }
        for dep in &self.dep {
            out.push(RuleSkeleton(vec![
                pat(Predicate::DependencyRel, dep),
                pos.clone(),
            ]));
        }
        out
    }
}

/// Simple patterns of one candidate span.
pub fn extract_simple_patterns(
    sentence: &Sentence,
    range: TokenRange,
    ngram_max: usize,
) -> Vec<SimplePattern> {
    CandidatePatterns::extract(sentence, range, ngram_max).patterns()
}

/// True iff every conjunct holds for the candidate range.
pub fn rule_matches(
    skeleton: &RuleSkeleton,
    sentence: &Sentence,
    range: TokenRange,
    ngram_max: usize,
) -> bool {
    let pats = CandidatePatterns::extract(sentence, range, ngram_max);
    skeleton.conjuncts().iter().all(|c| pats.has(c))
}

/// Postings from each simple pattern to the canonical candidates exhibiting it.
#[derive(Debug, Clone, Default)]
pub struct PatternIndex {
    postings: HashMap<SimplePattern, Vec<CandidateId>>,
    candidates: usize,
}

impl PatternIndex {
    pub fn build(corpus: &Corpus, index: &CandidateIndex, ngram_max: usize) -> Self {
        let mut postings: HashMap<SimplePattern, Vec<CandidateId>> = HashMap::new();
        for (id, unit) in index.units().iter().enumerate() {
            let sentence = &corpus.sentences[unit.sentence];
            for p in extract_simple_patterns(sentence, unit.range, ngram_max) {
                postings.entry(p).or_default().push(id);
            }
        }
        Self {
            postings,
            candidates: index.len(),
        }
    }

    pub fn candidates(&self) -> usize {
        self.candidates
    }

    /// Sorted candidate ids matching every conjunct.
    pub fn matches(&self, skeleton: &RuleSkeleton) -> Vec<CandidateId> {
        let mut lists = Vec::with_capacity(2);
        for c in skeleton.conjuncts() {
            match self.postings.get(c) {
                Some(l) => lists.push(l.as_slice()),
                None => return Vec::new(),
            }
        }
        lists.sort_by_key(|l| l.len());
        let mut out = lists[0].to_vec();
        for other in &lists[1..] {
            out.retain(|id| other.binary_search(id).is_ok());
        }
        out
    }
}

/// Deduplicated rule skeletons enumerated from the corpus, with the
/// candidates each one matches. Sorted by skeleton for determinism.
#[derive(Debug, Clone, Default)]
pub struct RuleCandidateSet {
    pub skeletons: Vec<RuleSkeleton>,
    pub matches: Vec<Vec<CandidateId>>,
}

impl RuleCandidateSet {
    pub fn len(&self) -> usize {
        self.skeletons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skeletons.is_empty()
    }

    pub fn position(&self, skeleton: &RuleSkeleton) -> Option<usize> {
        self.skeletons.binary_search(skeleton).ok()
    }
}

pub fn enumerate_rule_candidates(
    corpus: &Corpus,
    index: &CandidateIndex,
    ngram_max: usize,
) -> RuleCandidateSet {
    let mut map: HashMap<RuleSkeleton, Vec<CandidateId>> = HashMap::new();
    for (id, unit) in index.units().iter().enumerate() {
        let sentence = &corpus.sentences[unit.sentence];
        for sk in CandidatePatterns::extract(sentence, unit.range, ngram_max).skeletons() {
            map.entry(sk).or_default().push(id);
        }
    }
    let mut entries: Vec<_> = map.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let (skeletons, matches) = entries.into_iter().unzip();
    RuleCandidateSet { skeletons, matches }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    Abstain,
    FirstByRuleId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakLabel {
    pub candidate: CandidateId,
    pub label: LabelId,
    /// Ids of every rule matching the candidate, ascending.
    pub rule_ids: Vec<usize>,
    /// Vote count per label id.
    pub votes: Vec<usize>,
}

/// Matching rule ids per candidate, over all rules.
pub fn match_rules(ruleset: &RuleSet, index: &PatternIndex) -> BTreeMap<CandidateId, Vec<usize>> {
    let mut out: BTreeMap<CandidateId, Vec<usize>> = BTreeMap::new();
    for (rid, rule) in ruleset.rules.iter().enumerate() {
        for c in index.matches(&rule.skeleton) {
            out.entry(c).or_default().push(rid);
        }
    }
    out
}

/// Majority vote over one candidate's matching rules.
pub fn vote(
    ruleset: &RuleSet,
    candidate: CandidateId,
    rule_ids: &[usize],
    tie_policy: TiePolicy,
) -> Option<WeakLabel> {
    let mut votes = vec![0usize; ruleset.labels.len()];
    for &r in rule_ids {
        votes[ruleset.rules[r].label.0] += 1;
    }
    let best = *votes.iter().max()?;
    if best == 0 {
        return None;
    }
    let top: Vec<usize> = (0..votes.len()).filter(|&l| votes[l] == best).collect();
    let label = if top.len() == 1 {
        top[0]
    } else {
        match tie_policy {
            TiePolicy::Abstain => return None,
            TiePolicy::FirstByRuleId => rule_ids
                .iter()
                .map(|&r| ruleset.rules[r].label.0)
                .find(|l| top.contains(l))?,
        }
    };
    Some(WeakLabel {
        candidate,
        label: LabelId(label),
        rule_ids: rule_ids.to_vec(),
        votes,
    })
}

/// Weak labels for every matched canonical candidate, sorted by candidate.
pub fn apply_rules(
    ruleset: &RuleSet,
    index: &PatternIndex,
    tie_policy: TiePolicy,
) -> Vec<WeakLabel> {
    match_rules(ruleset, index)
        .into_iter()
        .filter_map(|(c, ids)| vote(ruleset, c, &ids, tie_policy))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PhraseLexicon;
    use crate::fixtures::{s1_corpus, s1_sentence};
    use std::collections::BTreeSet;

    fn sp(p: Predicate, s: &str) -> SimplePattern {
        SimplePattern::new(p, s)
    }

    #[test]
    fn united_states_patterns() {
        let s = s1_sentence();
        let got: BTreeSet<_> = extract_simple_patterns(&s, TokenRange::new(4, 6), 3)
            .into_iter()
            .collect();
        let want: BTreeSet<_> = [
            sp(Predicate::TokenString, "united state"),
            sp(Predicate::PreNgram, "the"),
            sp(Predicate::PreNgram, "to the"),
            sp(Predicate::PreNgram, "move to the"),
            sp(Predicate::PostNgram, "in"),
            sp(Predicate::PostNgram, "in 1916"),
            sp(Predicate::PostNgram, "in 1916 ."),
            sp(Predicate::PosTag, "PROPN PROPN"),
            sp(Predicate::DependencyRel, "to"),
            sp(Predicate::DependencyRel, "move||to"),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn span_at_start_has_no_pre() {
        let p = CandidatePatterns::extract(&s1_sentence(), TokenRange::new(0, 1), 3);
        assert!(p.pre.is_empty());
        assert_eq!(p.post.len(), 3);
    }

    #[test]
    fn root_token_has_no_dependency() {
        let mut s = s1_sentence();
        s.tokens.truncate(1);
        s.tokens[0].head = -1;
        let p = CandidatePatterns::extract(&s, TokenRange::new(0, 1), 3);
        assert!(p.dep.is_empty());
        assert!(p.pre.is_empty() && p.post.is_empty());
    }

    #[test]
    fn pattern_counts_bounded() {
        let s = s1_sentence();
        for start in 0..9 {
            for end in start + 1..=9 {
                let p = CandidatePatterns::extract(&s, TokenRange::new(start, end), 3);
                assert!(p.pre.len() <= 3 && p.post.len() <= 3 && p.dep.len() <= 2);
                let pats = p.patterns();
                let count = |pr| pats.iter().filter(|x| x.predicate == pr).count();
                assert_eq!(count(Predicate::TokenString), 1);
                assert_eq!(count(Predicate::PosTag), 1);
            }
        }
    }

    #[test]
    fn compound_candidate_from_s1() {
        let c = s1_corpus();
        let idx = CandidateIndex::build(&c, &PhraseLexicon::default(), 5);
        let set = enumerate_rule_candidates(&c, &idx, 3);
        let want = RuleSkeleton::pair(
            sp(Predicate::PreNgram, "move to the"),
            sp(Predicate::PosTag, "PROPN PROPN"),
        )
        .unwrap();
        assert!(set.position(&want).is_some());
        assert!(set.skeletons.iter().all(|s| s.rule_type().is_some()));
    }

    #[test]
    fn empty_corpus_has_no_rule_candidates() {
        let c = Corpus::new(4, vec![]);
        let idx = CandidateIndex::build(&c, &PhraseLexicon::default(), 5);
        assert!(enumerate_rule_candidates(&c, &idx, 3).is_empty());
    }

    #[test]
    fn identical_sentences_share_skeletons() {
        let mut c = s1_corpus();
        let mut s2 = s1_sentence();
        s2.id = "S2".into();
        c.sentences.push(s2);
        let idx = CandidateIndex::build(&c, &PhraseLexicon::default(), 5);
        let set = enumerate_rule_candidates(&c, &idx, 3);
        let sk = RuleSkeleton::single(sp(Predicate::TokenString, "united state"));
        let pos = set.position(&sk).unwrap();
        assert_eq!(set.matches[pos].len(), 2);
    }

    #[test]
    fn matching_semantics() {
        let s = s1_sentence();
        let us = RuleSkeleton::single(sp(Predicate::TokenString, "united state"));
        assert!(rule_matches(&us, &s, TokenRange::new(4, 6), 3));
        assert!(!rule_matches(&us, &s, TokenRange::new(4, 5), 3));
        let wrong_pos = RuleSkeleton::pair(
            sp(Predicate::PreNgram, "move to the"),
            sp(Predicate::PosTag, "PROPN"),
        )
        .unwrap();
        assert!(!rule_matches(&wrong_pos, &s, TokenRange::new(4, 6), 3));
    }

    #[test]
    fn sub_span_resolves_to_canonical_unit() {
        let c = s1_corpus();
        let (lex, _) = PhraseLexicon::from_lines(["united state"]);
        let idx = CandidateIndex::build(&c, &lex, 5);
        let pidx = PatternIndex::build(&c, &idx, 3);
        let mut set = RuleSet::default();
        let loc = set.intern_label("Location");
        set.push(Rule {
            skeleton: RuleSkeleton::single(sp(Predicate::TokenString, "united state")),
            label: loc,
            provenance: Provenance::Seed,
            stats: None,
        });
        let labels = apply_rules(&set, &pidx, TiePolicy::Abstain);
        assert_eq!(labels.len(), 1);
        let unit = idx.canonical_of(0, TokenRange::new(4, 5)).unwrap();
        assert_eq!(labels[0].candidate, unit);
        assert_eq!(labels[0].rule_ids, vec![0]);
    }

    fn voting_set(labels_of_rules: &[usize]) -> RuleSet {
        let mut set = RuleSet {
            labels: vec!["Disease".into(), "Chemical".into()],
            rules: vec![],
        };
        for (i, &l) in labels_of_rules.iter().enumerate() {
            set.push(Rule {
                skeleton: RuleSkeleton::single(sp(Predicate::TokenString, &format!("r{i}"))),
                label: LabelId(l),
                provenance: Provenance::Seed,
                stats: None,
            });
        }
        set
    }

    #[test]
    fn majority_vote() {
        let set = voting_set(&[0, 1, 0]);
        let w = vote(&set, 7, &[0, 1, 2], TiePolicy::Abstain).unwrap();
        assert_eq!(w.label, LabelId(0));
        assert_eq!(w.votes, vec![2, 1]);

        let set = voting_set(&[0, 1]);
        assert!(vote(&set, 7, &[0, 1], TiePolicy::Abstain).is_none());
        let w = vote(&set, 7, &[1, 0], TiePolicy::FirstByRuleId).unwrap();
        assert_eq!(w.label, LabelId(1));

        let w = vote(&set, 7, &[1], TiePolicy::Abstain).unwrap();
        assert_eq!(w.label, LabelId(1));
        assert_eq!(w.rule_ids, vec![1]);
    }

    #[test]
    fn skeleton_ordering_and_validation() {
        let a = sp(Predicate::PosTag, "NOUN");
        let b = sp(Predicate::PreNgram, "the");
        let sk = RuleSkeleton::pair(a.clone(), b.clone()).unwrap();
        assert_eq!(sk.conjuncts()[0].predicate, Predicate::PreNgram);
        assert_eq!(sk.rule_type(), Some(RuleType::PreNgramPosTag));
        assert_eq!(sk.to_string(), "PreNgram=\"the\" ∧ POSTag=NOUN");
        assert!(RuleSkeleton::pair(b.clone(), b).is_none());
        assert_eq!(RuleSkeleton::new(vec![]).unwrap_err(), RuleError::Arity(0));
    }

    #[test]
    fn rules_jsonl_round_trip() {
        let mut set = voting_set(&[0, 1]);
        set.rules[1].provenance = Provenance::Learned { iteration: 3 };
        set.rules[1].stats = Some(RuleStats { f: 8, n: 10 });
        let text = set.to_jsonl();
        assert!(text.lines().nth(1).unwrap().contains("\"iteration\":3"));
        let back = RuleSet::from_jsonl(&text).unwrap();
        assert_eq!(back, set);
    }
}

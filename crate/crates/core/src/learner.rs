//! RlogF rule scoring and per-iteration rule selection.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::CandidateId;
use crate::rules::{LabelId, RuleCandidateSet, RuleSkeleton, RuleType};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("rule matches no candidates (N = 0)")]
    NoMatches,
}

/// Match counts of one rule against one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStats {
    /// Matched spans that are category members.
    pub f: usize,
    /// All matched spans.
    pub n: usize,
}

impl RuleStats {
    pub fn precision(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.f as f64 / self.n as f64
        }
    }

    /// RlogF, with `N = 0` or `F = 0` mapped to negative infinity.
    pub fn score(&self) -> f64 {
        rlogf_score(self.f, self.n).unwrap_or(f64::NEG_INFINITY)
    }
}

/// `(F/N)·log2(F)`; `F = 0` yields negative infinity.
pub fn rlogf_score(f: usize, n: usize) -> Result<f64, LearnerError> {
    if n == 0 {
        return Err(LearnerError::NoMatches);
    }
    if f == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(f as f64 / n as f64 * (f as f64).log2())
}

/// Rule budget for iteration `t` (1-based): `K0 + η·(t − 1)`.
pub fn k_schedule(k0: usize, growth: usize, iteration: usize) -> usize {
    k0 + growth * iteration.saturating_sub(1)
}

/// Category membership bitmaps over the candidate universe.
#[derive(Debug, Clone, PartialEq)]
pub struct Members {
    flags: Vec<Vec<bool>>,
}

impl Members {
    pub fn new(num_labels: usize, num_candidates: usize) -> Self {
        Self {
            flags: vec![vec![false; num_candidates]; num_labels],
        }
    }

    pub fn from_lists(lists: &[Vec<CandidateId>], num_candidates: usize) -> Self {
        let mut m = Self::new(lists.len(), num_candidates);
        for (l, list) in lists.iter().enumerate() {
            for &c in list {
                m.flags[l][c] = true;
            }
        }
        m
    }

    pub fn num_labels(&self) -> usize {
        self.flags.len()
    }

    pub fn is_member(&self, label: LabelId, c: CandidateId) -> bool {
        self.flags[label.0][c]
    }
}

/// Per-category stats for one rule: `N` = |matched|, `F_i` = |matched ∩ members_i|.
pub fn rule_stats(matched: &[CandidateId], members: &Members) -> Vec<RuleStats> {
    (0..members.num_labels())
        .map(|l| RuleStats {
            f: matched.iter().filter(|&&c| members.flags[l][c]).count(),
            n: matched.len(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Top K per entity category.
    #[default]
    EntityType,
    /// Top K per rule type.
    RuleType,
    /// Top K per (category, rule type).
    EntityAndRuleType,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 3] = [
        SelectionStrategy::EntityType,
        SelectionStrategy::RuleType,
        SelectionStrategy::EntityAndRuleType,
    ];
}

/// A candidate rule with its best category.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRule {
    pub candidate: usize,
    pub label: LabelId,
    pub stats: RuleStats,
    pub score: f64,
}

/// Scores each rule candidate and assigns it the category with the highest
/// RlogF (ties go to the lower label id).
pub fn score_candidates(rules: &RuleCandidateSet, members: &Members) -> Vec<ScoredRule> {
    let mut out = Vec::with_capacity(rules.len());
    for (i, matched) in rules.matches.iter().enumerate() {
        if matched.is_empty() {
            continue;
        }
        let per_label = rule_stats(matched, members);
        let mut best: Option<ScoredRule> = None;
        for (l, st) in per_label.into_iter().enumerate() {
            let score = st.score();
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(ScoredRule {
                    candidate: i,
                    label: LabelId(l),
                    stats: st,
                    score,
                });
            }
        }
        if let Some(b) = best {
            out.push(b);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    Label(LabelId),
    Type(RuleType),
    Both(LabelId, RuleType),
}

/// Picks up to `k` rules per strategy group, skipping rules below the
/// precision floor, with no coverage, or already in `existing`.
pub fn select_new_rules(
    scored: &[ScoredRule],
    rules: &RuleCandidateSet,
    strategy: SelectionStrategy,
    k: usize,
    precision_floor: f64,
    existing: &HashSet<RuleSkeleton>,
) -> Vec<ScoredRule> {
    let mut groups: BTreeMap<Group, Vec<&ScoredRule>> = BTreeMap::new();
    for s in scored {
        if s.stats.f == 0 || !s.score.is_finite() || s.stats.precision() < precision_floor {
            continue;
        }
        let skeleton = &rules.skeletons[s.candidate];
        if existing.contains(skeleton) {
            continue;
        }
        let Some(rt) = skeleton.rule_type() else {
            continue;
        };
        let g = match strategy {
            SelectionStrategy::EntityType => Group::Label(s.label),
            SelectionStrategy::RuleType => Group::Type(rt),
            SelectionStrategy::EntityAndRuleType => Group::Both(s.label, rt),
        };
        groups.entry(g).or_default().push(s);
    }

    let mut out = Vec::new();
    for (_, mut list) in groups {
        list.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(b.stats.f.cmp(&a.stats.f))
                .then_with(|| rules.skeletons[a.candidate].cmp(&rules.skeletons[b.candidate]))
        });
        out.extend(list.into_iter().take(k).cloned());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{Predicate, SimplePattern};

    #[test]
    fn rlogf_values() {
        // 0.8 * log2(80), log2(80) = 6.321928094887363
        assert!((rlogf_score(80, 100).unwrap() - 0.8 * 6.321_928_094_887_363).abs() < 1e-12);
        assert!((rlogf_score(80, 100).unwrap() - 5.0575).abs() < 1e-3);
        assert_eq!(rlogf_score(1, 1).unwrap(), 0.0);
        assert_eq!(rlogf_score(2, 2).unwrap(), 1.0);
        assert_eq!(rlogf_score(0, 5).unwrap(), f64::NEG_INFINITY);
        assert_eq!(rlogf_score(0, 0).unwrap_err(), LearnerError::NoMatches);
    }

    #[test]
    fn k_growth() {
        assert_eq!(k_schedule(20, 1, 1), 20);
        assert_eq!(k_schedule(20, 1, 5), 24);
        assert_eq!(k_schedule(20, 0, 9), 20);
    }

    #[test]
    fn stats_from_members() {
        let matched: Vec<usize> = (0..100).collect();
        let members = Members::from_lists(&[(0..80).collect(), vec![]], 100);
        let st = rule_stats(&matched, &members);
        assert_eq!(st[0], RuleStats { f: 80, n: 100 });
        assert_eq!(st[1].f, 0);

        let members = Members::from_lists(&[vec![1, 2, 3, 4]], 10);
        let st = rule_stats(&[1, 2, 3, 4], &members);
        assert_eq!(st[0].precision(), 1.0);
        assert_eq!(rule_stats(&[], &members)[0].score(), f64::NEG_INFINITY);
    }

    fn tok(s: &str) -> RuleSkeleton {
        RuleSkeleton::single(SimplePattern::new(Predicate::TokenString, s))
    }

    fn set(names: &[&str]) -> RuleCandidateSet {
        RuleCandidateSet {
            skeletons: names.iter().map(|n| tok(n)).collect(),
            matches: vec![vec![0]; names.len()],
        }
    }

    fn scored(c: usize, f: usize, n: usize) -> ScoredRule {
        let stats = RuleStats { f, n };
        ScoredRule {
            candidate: c,
            label: LabelId(0),
            stats,
            score: stats.score(),
        }
    }

    #[test]
    fn top_k_and_floor() {
        let rules = set(&["a", "b", "c"]);
        // 5.0575 vs 0.9 * log2(2) = 0.9 (precision 0.9 needs N = 20/9 → use F=9,N=10)
        let s = vec![scored(0, 80, 100), scored(1, 9, 10), scored(2, 17, 20)];
        let picked = select_new_rules(
            &s,
            &rules,
            SelectionStrategy::EntityType,
            1,
            0.8,
            &HashSet::new(),
        );
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].candidate, 0);

        let picked = select_new_rules(
            &s,
            &rules,
            SelectionStrategy::EntityType,
            5,
            0.9,
            &HashSet::new(),
        );
        let ids: Vec<_> = picked.iter().map(|p| p.candidate).collect();
        assert_eq!(ids, vec![1]); // 0.8 and 0.85 are under the floor
    }

    #[test]
    fn previously_selected_excluded() {
        let rules = set(&["a", "b"]);
        let s = vec![scored(0, 10, 10), scored(1, 4, 4)];
        let existing: HashSet<_> = [tok("a")].into_iter().collect();
        let picked = select_new_rules(&s, &rules, SelectionStrategy::EntityType, 5, 0.9, &existing);
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].candidate, 1);
    }

    #[test]
    fn ties_break_on_coverage_then_key() {
        let rules = set(&["b", "a", "c"]);
        let s = vec![scored(0, 4, 4), scored(1, 4, 4), scored(2, 1, 1)];
        let picked = select_new_rules(
            &s,
            &rules,
            SelectionStrategy::EntityType,
            3,
            0.9,
            &HashSet::new(),
        );
        let ids: Vec<_> = picked.iter().map(|p| p.candidate).collect();
        assert_eq!(ids, vec![1, 0, 2]);
    }

    #[test]
    fn best_category_assigned() {
        let rules = RuleCandidateSet {
            skeletons: vec![tok("x")],
            matches: vec![vec![0, 1, 2]],
        };
        let members = Members::from_lists(&[vec![0], vec![0, 1, 2]], 3);
        let s = score_candidates(&rules, &members);
        assert_eq!(s[0].label, LabelId(1));
        assert_eq!(s[0].stats, RuleStats { f: 3, n: 3 });
    }
}

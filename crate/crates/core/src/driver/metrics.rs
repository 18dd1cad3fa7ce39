use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

/// An entity mention keyed by sentence id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub sentence: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    /// Empty for boundary metrics.
    pub per_label: BTreeMap<String, Counts>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Gold mentions of every sentence that carries annotations.
pub fn gold_spans(corpus: &Corpus) -> Vec<LabeledSpan> {
    let mut out = Vec::new();
    for s in &corpus.sentences {
        for g in s.gold.iter().flatten() {
            out.push(LabeledSpan {
                sentence: s.id.clone(),
                start: g.start,
                end: g.end,
                label: g.label.clone(),
            });
        }
    }
    out
}

fn is_neg(s: &LabeledSpan) -> bool {
    s.label == "NEG"
}

/// Exact match on `(sentence, start, end, label)`, micro-averaged.
pub fn micro_prf(predicted: &[LabeledSpan], gold: &[LabeledSpan]) -> Metrics {
    let pred: BTreeSet<&LabeledSpan> = predicted.iter().filter(|s| !is_neg(s)).collect();
    let gold: BTreeSet<&LabeledSpan> = gold.iter().filter(|s| !is_neg(s)).collect();
    let mut per_label: BTreeMap<String, Counts> = BTreeMap::new();
    for p in &pred {
        let c = per_label.entry(p.label.clone()).or_default();
        c.predicted += 1;
        if gold.contains(p) {
            c.true_positives += 1;
        }
    }
    for g in &gold {
        per_label.entry(g.label.clone()).or_default().gold += 1;
    }
    let counts = Counts {
        true_positives: pred.iter().filter(|p| gold.contains(*p)).count(),
        predicted: pred.len(),
        gold: gold.len(),
    };
    Metrics {
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        counts,
        per_label,
    }
}

/// Like [`micro_prf`] but ignoring labels.
pub fn boundary_prf(predicted: &[LabeledSpan], gold: &[LabeledSpan]) -> Metrics {
    let key = |s: &LabeledSpan| (s.sentence.clone(), s.start, s.end);
    let pred: BTreeSet<_> = predicted.iter().filter(|s| !is_neg(s)).map(key).collect();
    let gold: BTreeSet<_> = gold.iter().filter(|s| !is_neg(s)).map(key).collect();
    let counts = Counts {
        true_positives: pred.intersection(&gold).count(),
        predicted: pred.len(),
        gold: gold.len(),
    };
    Metrics {
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        counts,
        per_label: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(s: &str, start: usize, end: usize, label: &str) -> LabeledSpan {
        LabeledSpan {
            sentence: s.into(),
            start,
            end,
            label: label.into(),
        }
    }

    #[test]
    fn perfect() {
        let g = vec![span("a", 0, 1, "X"), span("b", 2, 4, "Y")];
        let m = micro_prf(&g, &g);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn partial() {
        let gold = vec![
            span("a", 0, 1, "X"),
            span("a", 2, 3, "X"),
            span("b", 0, 2, "Y"),
            span("c", 1, 2, "Y"),
        ];
        let pred = vec![
            span("a", 0, 1, "X"),
            span("b", 0, 2, "Y"),
            span("c", 0, 2, "Y"),
        ];
        let m = micro_prf(&pred, &gold);
        // P = 2/3, R = 2/4, F1 = 2PR/(P+R) = (2/3)/(7/6) = 4/7
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(m.per_label["Y"].gold, 2);
        assert_eq!(m.per_label["Y"].true_positives, 1);
    }

    #[test]
    fn empty_predictions() {
        let m = micro_prf(&[], &[span("a", 0, 1, "X")]);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn neg_ignored() {
        let gold = vec![span("a", 0, 1, "X")];
        let pred = vec![span("a", 0, 1, "X"), span("a", 1, 2, "NEG")];
        assert_eq!(micro_prf(&pred, &gold).precision, 1.0);
    }

    #[test]
    fn boundary_ignores_labels() {
        let gold = vec![span("a", 0, 1, "X"), span("a", 2, 3, "Y")];
        let pred = vec![span("a", 0, 1, "Y"), span("a", 2, 3, "X")];
        assert_eq!(micro_prf(&pred, &gold).f1, 0.0);
        assert_eq!(boundary_prf(&pred, &gold).f1, 1.0);
        assert_eq!(boundary_prf(&[span("a", 5, 6, "X")], &gold).f1, 0.0);
    }
}

//! Small hand-built corpora used by tests, examples and the demo.

use crate::corpus::{Corpus, Sentence, TokenRange, TokenRecord};

/// "Einstein moved to the United States in 1916 ." with a 4-dimensional
/// embedding per token and noun chunks `[0,1)` and `[3,6)`.
pub fn s1_sentence() -> Sentence {
    // (text, lemma, pos, head, deprel)
    let rows: [(&str, &str, &str, i64, &str); 9] = [
        ("Einstein", "einstein", "PROPN", 1, "nsubj"),
        ("moved", "move", "VERB", -1, "ROOT"),
        ("to", "to", "ADP", 1, "prep"),
        ("the", "the", "DET", 5, "det"),
        ("United", "united", "PROPN", 5, "compound"),
        ("States", "state", "PROPN", 2, "pobj"),
        ("in", "in", "ADP", 1, "prep"),
        ("1916", "1916", "NUM", 6, "pobj"),
        (".", ".", "PUNCT", 1, "punct"),
    ];
    let tokens = rows
        .iter()
        .enumerate()
        .map(|(i, &(text, lemma, pos, head, deprel))| TokenRecord {
            text: text.into(),
            lemma: lemma.into(),
            pos: pos.into(),
            head,
            deprel: deprel.into(),
            embedding: (0..4).map(|d| ((i * 4 + d) as f64 * 0.37).sin()).collect(),
        })
        .collect();
    Sentence {
        id: "S1".into(),
        tokens,
        noun_chunks: vec![TokenRange::new(0, 1), TokenRange::new(3, 6)],
        gold: None,
    }
}

pub fn s1_corpus() -> Corpus {
    Corpus::new(4, vec![s1_sentence()])
}

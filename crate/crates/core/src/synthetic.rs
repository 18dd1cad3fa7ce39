//! Synthetic corpora with planted compound rules.
//!
//! Sentences come from templates. Every entity template embeds one compound
//! rule that picks out its entity exactly; distractor templates reuse the
//! shorter pieces of those contexts around ordinary nouns, so only the
//! planted conjunction stays precise. Generic templates hold entities in
//! uninformative contexts.
//!
//! Entity tokens carry cluster-structured embeddings: a category center, a
//! per-name direction and per-occurrence Gaussian noise. In generic contexts
//! the category component is weaker, the way a contextual encoder is less sure
//! of a mention it has little evidence about.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    seed_rules_to_json, Corpus, GoldEntity, PhraseLexicon, Sentence, TokenRange, TokenRecord,
};
use crate::rules::{Predicate, Provenance, Rule, RuleSet, RuleSkeleton, SimplePattern};

pub const CATEGORIES: [&str; 2] = ["Chemical", "Disease"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    pub dim: usize,
    /// Share of sentences built from distractor templates.
    pub distractor_rate: f64,
    /// Share of sentences built from generic templates.
    pub generic_rate: f64,
    /// Category-center weight in informative contexts.
    pub center_weight: f64,
    /// Category-center weight in generic contexts.
    pub generic_center_weight: f64,
    pub name_weight: f64,
    pub noise: f64,
    /// Noise on non-entity tokens.
    pub context_noise: f64,
    pub single_names: usize,
    pub multi_names: usize,
    pub seeds_per_category: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_sentences: 500,
            dev_sentences: 200,
            test_sentences: 100,
            dim: 32,
            distractor_rate: 0.2,
            generic_rate: 0.2,
            center_weight: 1.0,
            generic_center_weight: 0.5,
            name_weight: 0.8,
            noise: 0.55,
            context_noise: 0.1,
            single_names: 40,
            multi_names: 12,
            seeds_per_category: 3,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRule {
    pub label: String,
    pub skeleton: RuleSkeleton,
}

impl PlantedRule {
    pub fn render(&self) -> String {
        format!("{} → {}", self.skeleton, self.label)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub lexicon: PhraseLexicon,
    /// TokenString seeds: the most frequent single-token training names per
    /// category.
    pub seeds: RuleSet,
    pub planted: Vec<PlantedRule>,
}

impl SyntheticData {
    /// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl`, `seeds.json`,
    /// `phrases.txt` and `planted.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("train.jsonl"), self.train.to_jsonl())?;
        std::fs::write(dir.join("dev.jsonl"), self.dev.to_jsonl())?;
        std::fs::write(dir.join("test.jsonl"), self.test.to_jsonl())?;
        std::fs::write(dir.join("seeds.json"), seed_rules_to_json(&self.seeds))?;
        let mut phrases: String = self.lexicon.iter().map(|p| format!("{p}\n")).collect();
        if phrases.is_empty() {
            phrases.push('\n');
        }
        std::fs::write(dir.join("phrases.txt"), phrases)?;
        let planted: String = self.planted.iter().map(|p| p.render() + "\n").collect();
        std::fs::write(dir.join("planted.txt"), planted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Noun,
    NounNoun,
    AdjNoun,
    Any,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// `|`-separated alternatives of `text` or `text/lemma`; empty means absent.
    Word(&'static str),
    Entity(Shape),
    Neutral(Shape),
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    kind: Kind,
    pos: &'static str,
    /// Slot index of the governor, `-1` for the root.
    head: i64,
    dep: &'static str,
}

const fn w(alts: &'static str, pos: &'static str, head: i64, dep: &'static str) -> Slot {
    Slot {
        kind: Kind::Word(alts),
        pos,
        head,
        dep,
    }
}

const fn ent(shape: Shape, head: i64, dep: &'static str) -> Slot {
    Slot {
        kind: Kind::Entity(shape),
        pos: "",
        head,
        dep,
    }
}

const fn neu(shape: Shape, head: i64, dep: &'static str) -> Slot {
    Slot {
        kind: Kind::Neutral(shape),
        pos: "",
        head,
        dep,
    }
}

struct Template {
    /// Category of the entity slots; `None` picks one per slot.
    category: Option<usize>,
    informative: bool,
    planted: Option<[(Predicate, &'static str); 2]>,
    slots: &'static [Slot],
}

use Predicate::{DependencyRel as Dep, PosTag as Pos, PostNgram as Post, PreNgram as Pre};
use Shape::{AdjNoun, Any, Noun, NounNoun};

const ENTITY_TEMPLATES: [Template; 10] = [
    Template {
        category: Some(0),
        informative: true,
        planted: Some([(Pre, "treat with"), (Post, "twice")]),
        slots: &[
            w(
                "Patients/patient|Mice/mouse|Rats/rat",
                "NOUN",
                3,
                "nsubjpass",
            ),
            w("were/be", "AUX", 3, "auxpass"),
            w("|then|successfully", "ADV", 3, "advmod"),
            w("treated/treat", "VERB", -1, "ROOT"),
            w("with", "ADP", 3, "prep"),
            ent(Any, 4, "pobj"),
            w("twice", "ADV", 7, "advmod"),
            w("daily|weekly", "ADV", 3, "advmod"),
            w(".", "PUNCT", 3, "punct"),
        ],
    },
    Template {
        category: Some(0),
        informative: true,
        planted: Some([(Pre, "dose of"), (Pos, "NOUN")]),
        slots: &[
            w("A/a", "DET", 2, "det"),
            w("high|low|single", "ADJ", 2, "amod"),
            w("dose", "NOUN", 6, "nsubjpass"),
            w("of", "ADP", 2, "prep"),
            ent(Noun, 3, "pobj"),
            w("was/be", "AUX", 6, "auxpass"),
            w(
                "given/give|administered/administer|tolerated/tolerate",
                "VERB",
                -1,
                "ROOT",
            ),
            w(".", "PUNCT", 6, "punct"),
        ],
    },
    Template {
        category: Some(0),
        informative: true,
        planted: Some([(Pos, "NOUN"), (Post, "inhibit growth")]),
        slots: &[
            w(
                "Notably/notably|Remarkably/remarkably|Here/here",
                "ADV",
                3,
                "advmod",
            ),
            w(",|", "PUNCT", 3, "punct"),
            ent(Noun, 3, "nsubj"),
            w("inhibited/inhibit", "VERB", -1, "ROOT"),
            w("growth", "NOUN", 3, "dobj"),
            w("of|in", "ADP", 4, "prep"),
            w("cells/cell|tumors/tumor|mice/mouse", "NOUN", 5, "pobj"),
            w(".", "PUNCT", 3, "punct"),
        ],
    },
    Template {
        category: Some(0),
        informative: true,
        planted: Some([(Dep, "induce||by"), (Pos, "NOUN")]),
        slots: &[
            w(
                "Toxicity/toxicity|Damage/damage|Apoptosis/apoptosis",
                "NOUN",
                2,
                "nsubjpass",
            ),
            w("was/be", "AUX", 2, "auxpass"),
            w("induced/induce", "VERB", -1, "ROOT"),
            w("|directly|mainly", "ADV", 2, "advmod"),
            w("by", "ADP", 2, "agent"),
            ent(Noun, 4, "pobj"),
            w("in", "ADP", 2, "prep"),
            w("rats/rat|vivo|mice/mouse", "NOUN", 6, "pobj"),
            w(".", "PUNCT", 2, "punct"),
        ],
    },
    Template {
        category: Some(0),
        informative: true,
        planted: Some([(Pre, "level of"), (Pos, "NOUN NOUN")]),
        slots: &[
            w(
                "Serum/serum|Plasma/plasma|Urine/urine",
                "NOUN",
                1,
                "compound",
            ),
            w("levels/level", "NOUN", 4, "nsubj"),
            w("of", "ADP", 1, "prep"),
            ent(NounNoun, 2, "pobj"),
            w("were/be|remained/remain", "VERB", -1, "ROOT"),
            w("elevated|stable", "ADJ", 4, "acomp"),
            w(".", "PUNCT", 4, "punct"),
        ],
    },
    Template {
        category: Some(1),
        informative: true,
        planted: Some([(Pre, "suffer from"), (Post, "since")]),
        slots: &[
            w("Many/many|Several/several|Some/some", "ADJ", 1, "amod"),
            w("patients/patient", "NOUN", 4, "nsubj"),
            w("had/have|have", "AUX", 4, "aux"),
            w("|long|often", "ADV", 4, "advmod"),
            w("suffered/suffer", "VERB", -1, "ROOT"),
            w("from", "ADP", 4, "prep"),
            ent(Any, 5, "pobj"),
            w("since", "ADP", 4, "prep"),
            w("childhood|birth", "NOUN", 7, "pobj"),
            w(".", "PUNCT", 4, "punct"),
        ],
    },
    Template {
        category: Some(1),
        informative: true,
        planted: Some([(Pre, "risk of"), (Pos, "ADJ NOUN")]),
        slots: &[
            w("The/the", "DET", 2, "det"),
            w("increased|overall|high", "ADJ", 2, "amod"),
            w("risk", "NOUN", 5, "nsubj"),
            w("of", "ADP", 2, "prep"),
            ent(AdjNoun, 3, "pobj"),
            w("was/be|remained/remain", "VERB", -1, "ROOT"),
            w("low|high|unchanged", "ADJ", 5, "acomp"),
            w(".", "PUNCT", 5, "punct"),
        ],
    },
    Template {
        category: Some(1),
        informative: true,
        planted: Some([(Pos, "NOUN"), (Post, "be diagnose")]),
        slots: &[
            w(
                "Later/later|Eventually/eventually|Finally/finally",
                "ADV",
                4,
                "advmod",
            ),
            w(",|", "PUNCT", 4, "punct"),
            ent(Noun, 4, "nsubjpass"),
            w("was/be", "AUX", 4, "auxpass"),
            w("diagnosed/diagnose", "VERB", -1, "ROOT"),
            w("in|at", "ADP", 4, "prep"),
            w("the", "DET", 7, "det"),
            w("clinic|hospital", "NOUN", 5, "pobj"),
            w(".", "PUNCT", 4, "punct"),
        ],
    },
    Template {
        category: Some(1),
        informative: true,
        planted: Some([(Dep, "die||of"), (Pos, "NOUN")]),
        slots: &[
            w("Two/two|Three/three|Four/four", "NUM", 1, "nummod"),
            w("patients/patient", "NOUN", 2, "nsubj"),
            w("died/die", "VERB", -1, "ROOT"),
            w("|suddenly|later", "ADV", 2, "advmod"),
            w("of", "ADP", 2, "prep"),
            ent(Noun, 4, "pobj"),
            w(".", "PUNCT", 2, "punct"),
        ],
    },
    Template {
        category: Some(1),
        informative: true,
        planted: Some([(Pos, "ADJ NOUN"), (Post, "progress slowly")]),
        slots: &[
            w(
                "Typically/typically|Usually/usually|Often/often",
                "ADV",
                3,
                "advmod",
            ),
            w(",|", "PUNCT", 3, "punct"),
            ent(AdjNoun, 3, "nsubj"),
            w("progressed/progress", "VERB", -1, "ROOT"),
            w("slowly", "ADV", 3, "advmod"),
            w("over|without", "ADP", 3, "prep"),
            w("years/year|treatment|decades/decade", "NOUN", 5, "pobj"),
            w(".", "PUNCT", 3, "punct"),
        ],
    },
];

/// Shorter variants of the planted contexts around ordinary nouns.
const DISTRACTOR_TEMPLATES: [Template; 9] = [
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("They/they|We/we", "PRON", 1, "nsubj"),
            w("met/meet", "VERB", -1, "ROOT"),
            w("with", "ADP", 1, "prep"),
            neu(Noun, 2, "pobj"),
            w("twice", "ADV", 5, "advmod"),
            w("daily|weekly", "ADV", 1, "advmod"),
            w(".", "PUNCT", 1, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("A/a", "DET", 1, "det"),
            w("glass|cup|bottle", "NOUN", 5, "nsubjpass"),
            w("of", "ADP", 1, "prep"),
            neu(Noun, 2, "pobj"),
            w("was/be", "AUX", 5, "auxpass"),
            w("spilled/spill|poured/pour", "VERB", -1, "ROOT"),
            w(".", "PUNCT", 5, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("Notably/notably|Here/here", "ADV", 3, "advmod"),
            w(",|", "PUNCT", 3, "punct"),
            neu(Noun, 3, "nsubj"),
            w("inhibited/inhibit", "VERB", -1, "ROOT"),
            w("sales/sale|travel|trade", "NOUN", 3, "dobj"),
            w(".", "PUNCT", 3, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("The/the", "DET", 1, "det"),
            w("letter|parcel", "NOUN", 3, "nsubjpass"),
            w("was/be", "AUX", 3, "auxpass"),
            w("sent/send|delivered/deliver", "VERB", -1, "ROOT"),
            w("|directly|mainly", "ADV", 3, "advmod"),
            w("by", "ADP", 3, "agent"),
            neu(Noun, 5, "pobj"),
            w(".", "PUNCT", 3, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("The/the", "DET", 1, "det"),
            w("amount|price", "NOUN", 4, "nsubj"),
            w("of", "ADP", 1, "prep"),
            neu(NounNoun, 2, "pobj"),
            w("was/be|remained/remain", "VERB", -1, "ROOT"),
            w("stable|high", "ADJ", 4, "acomp"),
            w(".", "PUNCT", 4, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("She/she|He/he", "PRON", 2, "nsubj"),
            w("has/have", "AUX", 2, "aux"),
            w("been/be", "VERB", -1, "ROOT"),
            w("away", "ADV", 2, "advmod"),
            w("from", "ADP", 2, "prep"),
            neu(Noun, 4, "pobj"),
            w("since", "ADP", 2, "prep"),
            w("May/may|June/june", "PROPN", 6, "pobj"),
            w(".", "PUNCT", 2, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("The/the", "DET", 1, "det"),
            w("beauty|size", "NOUN", 4, "nsubj"),
            w("of", "ADP", 1, "prep"),
            neu(AdjNoun, 2, "pobj"),
            w("was/be|remained/remain", "VERB", -1, "ROOT"),
            w("striking|high", "ADJ", 4, "acomp"),
            w(".", "PUNCT", 4, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("Later/later|Finally/finally", "ADV", 4, "advmod"),
            w(",|", "PUNCT", 4, "punct"),
            neu(Noun, 4, "nsubjpass"),
            w("was/be", "AUX", 4, "auxpass"),
            w("repaired/repair|cleaned/clean", "VERB", -1, "ROOT"),
            w(".", "PUNCT", 4, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("Usually/usually|Often/often", "ADV", 3, "advmod"),
            w(",|", "PUNCT", 3, "punct"),
            neu(AdjNoun, 3, "nsubj"),
            w("progressed/progress", "VERB", -1, "ROOT"),
            w("quickly", "ADV", 3, "advmod"),
            w(".", "PUNCT", 3, "punct"),
        ],
    },
];

/// Entities in contexts that say nothing about their category.
const GENERIC_TEMPLATES: [Template; 3] = [
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("We/we", "PRON", 2, "nsubj"),
            w("also|then", "ADV", 2, "advmod"),
            w(
                "examined/examine|studied/study|measured/measure",
                "VERB",
                -1,
                "ROOT",
            ),
            ent(Any, 2, "dobj"),
            w(".", "PUNCT", 2, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            ent(Any, 4, "nsubjpass"),
            w("and", "CCONJ", 0, "cc"),
            ent(Any, 0, "conj"),
            w("were/be", "AUX", 4, "auxpass"),
            w("mentioned/mention|listed/list", "VERB", -1, "ROOT"),
            w("in", "ADP", 4, "prep"),
            w("the", "DET", 7, "det"),
            w("report|table", "NOUN", 5, "pobj"),
            w(".", "PUNCT", 4, "punct"),
        ],
    },
    Template {
        category: None,
        informative: false,
        planted: None,
        slots: &[
            w("The/the", "DET", 1, "det"),
            w("study|review", "NOUN", 2, "nsubj"),
            w("focused/focus|reported/report", "VERB", -1, "ROOT"),
            w("on", "ADP", 2, "prep"),
            ent(Any, 3, "pobj"),
            w(".", "PUNCT", 2, "punct"),
        ],
    },
];

const NEUTRAL_NOUNS: [&str; 10] = [
    "water",
    "friends/friend",
    "colleagues/colleague",
    "furniture",
    "paper",
    "music",
    "rain",
    "traffic",
    "wood",
    "paint",
];
const NEUTRAL_NOUN_NOUN: [&str; 4] = [
    "tap water",
    "coffee beans/coffee bean",
    "steel pipes/steel pipe",
    "olive oil",
];
const NEUTRAL_ADJ_NOUN: [&str; 4] = [
    "green hills/green hill",
    "old castle",
    "red roofs/red roof",
    "quiet village",
];
const DISEASE_ADJECTIVES: [&str; 6] = [
    "chronic",
    "acute",
    "severe",
    "hereditary",
    "juvenile",
    "congenital",
];
const CHEMICAL_SUFFIXES: [&str; 6] = ["ine", "ol", "ide", "ate", "ium", "ane"];
const DISEASE_SUFFIXES: [&str; 6] = ["itis", "osis", "emia", "oma", "algia", "pathy"];

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

/// `(text, lemma, pos)` of one surface token.
type Word = (String, String, &'static str);

fn parse_word(word: &str) -> (String, String) {
    match word.split_once('/') {
        Some((t, l)) => (t.to_string(), l.to_string()),
        None => (word.to_string(), word.to_lowercase()),
    }
}

/// Splits `"green hills/green hill"` into per-token `(text, lemma)` pairs.
fn parse_phrase(phrase: &str) -> Vec<(String, String)> {
    let (text, lemma) = parse_word(phrase);
    text.split_whitespace()
        .zip(lemma.split_whitespace())
        .map(|(t, l)| (t.to_string(), l.to_string()))
        .collect()
}

#[derive(Debug, Clone)]
struct Name {
    words: Vec<Word>,
    vector: Vec<f64>,
}

impl Name {
    fn lemma(&self) -> String {
        self.words
            .iter()
            .map(|w| w.1.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Shared vocabulary and vectors for every split.
struct World {
    cfg: SyntheticConfig,
    centers: [Vec<f64>; 2],
    single: [Vec<Name>; 2],
    multi: [Vec<Name>; 2],
    single_weights: WeightedIndex<f64>,
}

impl World {
    fn new(cfg: &SyntheticConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.dim;
        let basis = |i: usize| {
            (0..d)
                .map(|j| if j == i { 1.0 } else { 0.0 })
                .collect::<Vec<f64>>()
        };
        let mut used: HashSet<String> = HashSet::new();
        let mut pseudo = |rng: &mut ChaCha8Rng, suffixes: &[&str]| loop {
            const C: &[u8] = b"bcdfgklmnprstvz";
            const V: &[u8] = b"aeiou";
            let mut s = String::new();
            for _ in 0..2 {
                s.push(C[rng.gen_range(0..C.len())] as char);
                s.push(V[rng.gen_range(0..V.len())] as char);
            }
            s.push_str(suffixes.choose(rng).unwrap());
            if used.insert(s.clone()) {
                return s;
            }
        };
        let mut single: [Vec<Name>; 2] = [Vec::new(), Vec::new()];
        let mut multi: [Vec<Name>; 2] = [Vec::new(), Vec::new()];
        for c in 0..2 {
            let suffixes: &[&str] = if c == 0 {
                &CHEMICAL_SUFFIXES
            } else {
                &DISEASE_SUFFIXES
            };
            for _ in 0..cfg.single_names {
                let s = pseudo(&mut rng, suffixes);
                single[c].push(Name {
                    words: vec![(s.clone(), s, "NOUN")],
                    vector: unit_gaussian(&mut rng, d),
                });
            }
            for _ in 0..cfg.multi_names {
                let words = if c == 0 {
                    let a = pseudo(&mut rng, &["yl"]);
                    let b = pseudo(&mut rng, suffixes);
                    vec![(a.clone(), a, "NOUN"), (b.clone(), b, "NOUN")]
                } else {
                    let adj = DISEASE_ADJECTIVES.choose(&mut rng).unwrap().to_string();
                    let b = pseudo(&mut rng, suffixes);
                    vec![(adj.clone(), adj, "ADJ"), (b.clone(), b, "NOUN")]
                };
                multi[c].push(Name {
                    words,
                    vector: unit_gaussian(&mut rng, d),
                });
            }
        }
        let single_weights =
            WeightedIndex::new((0..cfg.single_names).map(|i| 1.0 / (i as f64 + 1.0)))
                .expect("names");
        Self {
            cfg: cfg.clone(),
            centers: [basis(0), basis(1)],
            single,
            multi,
            single_weights,
        }
    }

    /// Fixed vector of a context word, independent of the split.
    fn word_vector(&self, lemma: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ fnv1a(lemma));
        unit_gaussian(&mut rng, self.cfg.dim)
    }

    fn noisy(&self, base: Vec<f64>, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let s = scale / (self.cfg.dim as f64).sqrt();
        base.into_iter()
            .map(|x| x + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn pick_name(&self, category: usize, shape: Shape, rng: &mut ChaCha8Rng) -> &Name {
        let multi_ok = match shape {
            Shape::Noun => false,
            Shape::NounNoun => return self.multi[0].choose(rng).unwrap(),
            Shape::AdjNoun => return self.multi[1].choose(rng).unwrap(),
            Shape::Any => true,
        };
        if multi_ok && rng.gen_bool(0.3) {
            self.multi[category].choose(rng).unwrap()
        } else {
            &self.single[category][self.single_weights.sample(rng)]
        }
    }

    fn entity_embedding(
        &self,
        category: usize,
        name: &Name,
        lemma: &str,
        informative: bool,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let c = &self.cfg;
        let alpha = if informative {
            c.center_weight
        } else {
            c.generic_center_weight
        };
        let wv = self.word_vector(lemma);
        let mut dir: Vec<f64> = name
            .vector
            .iter()
            .zip(&wv)
            .map(|(a, b)| a + 0.5 * b)
            .collect();
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|x| *x /= n);
        let base = self.centers[category]
            .iter()
            .zip(&dir)
            .map(|(cv, dv)| alpha * cv + c.name_weight * dv)
            .collect();
        self.noisy(base, c.noise, rng)
    }

    fn instantiate(&self, template: &Template, id: String, rng: &mut ChaCha8Rng) -> Sentence {
        // per slot: tokens (word, embedding, inside-slot head offset), entity label
        let mut slot_tokens: Vec<Vec<(Word, Vec<f64>)>> = Vec::with_capacity(template.slots.len());
        let mut slot_label: Vec<Option<usize>> = Vec::with_capacity(template.slots.len());
        for slot in template.slots {
            match slot.kind {
                Kind::Word(alts) => {
                    let alt = *alts.split('|').collect::<Vec<_>>().choose(rng).unwrap();
                    if alt.is_empty() {
                        slot_tokens.push(Vec::new());
                    } else {
                        let (text, lemma) = parse_word(alt);
                        let emb = self.noisy(self.word_vector(&lemma), self.cfg.context_noise, rng);
                        slot_tokens.push(vec![((text, lemma, slot.pos), emb)]);
                    }
                    slot_label.push(None);
                }
                Kind::Entity(shape) => {
                    let category = template.category.unwrap_or_else(|| rng.gen_range(0..2));
                    let category = match shape {
                        Shape::NounNoun => 0,
                        Shape::AdjNoun => 1,
                        _ => category,
                    };
                    let name = self.pick_name(category, shape, rng).clone();
                    let toks = name
                        .words
                        .iter()
                        .map(|wd| {
                            let emb = self.entity_embedding(
                                category,
                                &name,
                                &wd.1,
                                template.informative,
                                rng,
                            );
                            (wd.clone(), emb)
                        })
                        .collect();
                    slot_tokens.push(toks);
                    slot_label.push(Some(category));
                }
                Kind::Neutral(shape) => {
                    let phrase = match shape {
                        Shape::NounNoun => *NEUTRAL_NOUN_NOUN.choose(rng).unwrap(),
                        Shape::AdjNoun => *NEUTRAL_ADJ_NOUN.choose(rng).unwrap(),
                        _ => *NEUTRAL_NOUNS.choose(rng).unwrap(),
                    };
                    let parts = parse_phrase(phrase);
                    let n = parts.len();
                    let toks = parts
                        .into_iter()
                        .enumerate()
                        .map(|(i, (t, l))| {
                            let pos = if shape == Shape::AdjNoun && i + 1 < n {
                                "ADJ"
                            } else {
                                "NOUN"
                            };
                            let emb = self.noisy(self.word_vector(&l), self.cfg.noise, rng);
                            ((t, l, pos), emb)
                        })
                        .collect();
                    slot_tokens.push(toks);
                    slot_label.push(None);
                }
            }
        }

        // slot -> (first position, head-word position)
        let mut starts = Vec::with_capacity(slot_tokens.len());
        let mut pos = 0usize;
        for toks in &slot_tokens {
            starts.push(pos);
            pos += toks.len();
        }
        let head_of_slot = |s: usize| starts[s] + slot_tokens[s].len().max(1) - 1;

        let mut tokens = Vec::with_capacity(pos);
        let mut gold = Vec::new();
        for (s, toks) in slot_tokens.iter().enumerate() {
            let slot = &template.slots[s];
            let n = toks.len();
            for (i, ((text, lemma, tag), emb)) in toks.iter().enumerate() {
                let (head, dep) = if i + 1 < n {
                    (
                        head_of_slot(s) as i64,
                        if *tag == "ADJ" { "amod" } else { "compound" },
                    )
                } else if slot.head < 0 {
                    (-1, slot.dep)
                } else {
                    debug_assert!(!slot_tokens[slot.head as usize].is_empty());
                    (head_of_slot(slot.head as usize) as i64, slot.dep)
                };
                tokens.push(TokenRecord {
                    text: text.clone(),
                    lemma: lemma.clone(),
                    pos: tag.to_string(),
                    head,
                    deprel: dep.to_string(),
                    embedding: emb.clone(),
                });
            }
            if let Some(c) = slot_label[s] {
                gold.push(GoldEntity {
                    start: starts[s],
                    end: starts[s] + n,
                    label: CATEGORIES[c].to_string(),
                });
            }
        }
        let noun_chunks = noun_chunks(&tokens);
        Sentence {
            id,
            tokens,
            noun_chunks,
            gold: Some(gold),
        }
    }

    fn split(&self, prefix: &str, n: usize, stream: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        let sentences = (0..n)
            .map(|i| {
                let u: f64 = rng.gen();
                let template = if u < self.cfg.distractor_rate {
                    DISTRACTOR_TEMPLATES.choose(&mut rng).unwrap()
                } else if u < self.cfg.distractor_rate + self.cfg.generic_rate {
                    GENERIC_TEMPLATES.choose(&mut rng).unwrap()
                } else {
                    ENTITY_TEMPLATES.choose(&mut rng).unwrap()
                };
                self.instantiate(template, format!("{prefix}-{i:04}"), &mut rng)
            })
            .collect();
        Corpus::new(self.cfg.dim, sentences)
    }
}

/// Maximal runs of nominal tags that contain a noun.
fn noun_chunks(tokens: &[TokenRecord]) -> Vec<TokenRange> {
    let nominal = |p: &str| matches!(p, "DET" | "ADJ" | "NOUN" | "PROPN" | "NUM");
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !nominal(&tokens[i].pos) {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && nominal(&tokens[i].pos) {
            i += 1;
        }
        if tokens[start..i]
            .iter()
            .any(|t| t.pos == "NOUN" || t.pos == "PROPN")
        {
            out.push(TokenRange::new(start, i));
        }
    }
    out
}

pub fn planted_rules() -> Vec<PlantedRule> {
    ENTITY_TEMPLATES
        .iter()
        .map(|t| {
            let [(p1, s1), (p2, s2)] = t.planted.expect("entity templates plant a rule");
            PlantedRule {
                label: CATEGORIES[t.category.expect("entity templates have a category")]
                    .to_string(),
                skeleton: RuleSkeleton::pair(
                    SimplePattern::new(p1, s1),
                    SimplePattern::new(p2, s2),
                )
                .expect("planted pair type is allowed"),
            }
        })
        .collect()
}

/// TokenString seeds for the `per_category` most frequent single-token gold
/// names in `corpus`.
pub fn frequent_name_seeds(corpus: &Corpus, per_category: usize) -> RuleSet {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for s in &corpus.sentences {
        for g in s.gold.iter().flatten().filter(|g| g.end - g.start == 1) {
            let lemma = s.lemmas_of(TokenRange::new(g.start, g.end));
            *counts.entry((g.label.clone(), lemma)).or_default() += 1;
        }
    }
    let mut rules = RuleSet::default();
    for label in CATEGORIES {
        let id = rules.intern_label(label);
        let mut names: Vec<(&String, usize)> = counts
            .iter()
            .filter(|((l, _), _)| l == label)
            .map(|((_, n), &c)| (n, c))
            .collect();
        names.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (name, _) in names.into_iter().take(per_category) {
            rules.push(Rule {
                skeleton: RuleSkeleton::single(SimplePattern::new(Predicate::TokenString, name)),
                label: id,
                provenance: Provenance::Seed,
                stats: None,
            });
        }
    }
    rules
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticData {
    let world = World::new(cfg);
    let train = world.split("train", cfg.train_sentences, 1);
    let dev = world.split("dev", cfg.dev_sentences, 2);
    let test = world.split("test", cfg.test_sentences, 3);

    let mut lexicon = PhraseLexicon::default();
    for c in 0..2 {
        for n in &world.multi[c] {
            lexicon.insert(&n.lemma());
        }
    }
    for phrase in NEUTRAL_NOUN_NOUN.iter().chain(&NEUTRAL_ADJ_NOUN) {
        lexicon.insert(&parse_word(phrase).1);
    }
    let seeds = frequent_name_seeds(&train, cfg.seeds_per_category);
    SyntheticData {
        train,
        dev,
        test,
        lexicon,
        seeds,
        planted: planted_rules(),
    }
}

/// Gold label counts per category, for quick summaries.
pub fn label_counts(corpus: &Corpus) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for s in &corpus.sentences {
        for g in s.gold.iter().flatten() {
            *out.entry(g.label.clone()).or_insert(0) += 1;
        }
    }
    out
}

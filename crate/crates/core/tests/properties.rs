mod common;

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanrules_core::candidates::{
    enumerate_spans, initial_negative_spans, merge_phrase_spans, CandidateIndex,
};
use spanrules_core::corpus::{Corpus, PhraseLexicon, TokenRange};
use spanrules_core::driver::{bootstrap, BootstrapConfig, Silent};
use spanrules_core::rules::{apply_rules, PatternIndex, TiePolicy};
use spanrules_core::selection::{
    confidence_score, cosine, dynamic_threshold, global_score, seed_high_precision,
    HighPrecisionSet, SelectionParams,
};
use spanrules_core::synthetic::{generate, SyntheticConfig};
use spanrules_core::tagger::{
    loss_and_gradient, predict_corpus, predict_span, span_representation, train_tagger,
    Contextualizer, Example, TaggerConfig, TaggerParams,
};

use common::{naive_apply, random_corpus, random_rules, rng};

fn random_vectors(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("L{i}")).collect()
}

fn small_tagger(contextualizer: Contextualizer) -> TaggerConfig {
    TaggerConfig {
        hidden: 5,
        init_scale: 0.5,
        contextualizer,
        ..Default::default()
    }
}

/// Random examples over a corpus, `class` in `0..=num_labels`.
fn random_examples(
    rng: &mut impl Rng,
    corpus: &Corpus,
    n: usize,
    num_labels: usize,
) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let si = rng.gen_range(0..corpus.sentences.len());
            let len = corpus.sentences[si].len();
            let start = rng.gen_range(0..len);
            let end = rng.gen_range(start + 1..=(start + 3).min(len));
            Example {
                sentence: si,
                range: TokenRange::new(start, end),
                class: rng.gen_range(0..=num_labels),
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn span_count_matches_formula(len in 0usize..20, max in 1usize..7) {
        let spans = enumerate_spans(0, len, max);
        let expected: usize = (1..=max.min(len)).map(|l| len - l + 1).sum();
        prop_assert_eq!(spans.len(), expected);
        let unique: BTreeSet<_> = spans.iter().map(|s| s.span).collect();
        prop_assert_eq!(unique.len(), spans.len());
        prop_assert!(spans.iter().all(|s| s.span.len() <= max && s.span.end <= len));
    }

    #[test]
    fn phrase_merge_is_idempotent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, 3, 12);
        let s = &corpus.sentences[0];
        // lexicon built from bigrams and trigrams that occur in the sentence
        let mut phrases = Vec::new();
        for _ in 0..3 {
            if s.len() >= 2 {
                let start = r.gen_range(0..s.len() - 1);
                let end = (start + r.gen_range(2..=3)).min(s.len());
                phrases.push(s.lemmas_of(TokenRange::new(start, end)));
            }
        }
        let (lex, _) = PhraseLexicon::from_lines(phrases.iter().map(String::as_str));
        let spans = enumerate_spans(0, s.len(), 5);
        let once = merge_phrase_spans(&spans, &lex, s);
        let twice = merge_phrase_spans(&once, &lex, s);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.iter().all(|c| c.canonical.contains(&c.span)));
    }

    #[test]
    fn negatives_avoid_noun_chunks(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, 1, 12);
        let s = &corpus.sentences[0];
        let negs: BTreeSet<_> = initial_negative_spans(0, s, 5).into_iter().map(|c| c.span).collect();
        for span in enumerate_spans(0, s.len(), 5).into_iter().map(|c| c.span) {
            let touches = s.noun_chunks.iter().any(|c| c.start < span.end && span.start < c.end);
            prop_assert_eq!(negs.contains(&span), !touches);
        }
    }

    #[test]
    fn apply_rules_matches_naive_oracle(seed in any::<u64>(), tie in prop_oneof![Just(TiePolicy::Abstain), Just(TiePolicy::FirstByRuleId)]) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, 8, 12);
        let rules = random_rules(&mut r, &corpus, 12, 3, 3);
        let index = CandidateIndex::build(&corpus, &PhraseLexicon::default(), 5);
        let patterns = PatternIndex::build(&corpus, &index, 3);
        let got: Vec<_> = apply_rules(&rules, &patterns, tie)
            .into_iter()
            .map(|w| {
                let u = index.unit(w.candidate);
                ((u.sentence, u.range.start, u.range.end), (w.label.0, w.rule_ids, w.votes))
            })
            .collect();
        let want: Vec<_> = naive_apply(&rules, &corpus, 5, 3, tie).into_iter().collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn threshold_monotone_in_temperature(seed in any::<u64>(), n in 2usize..12) {
        let mut r = rng(seed);
        let members = random_vectors(&mut r, n, 4);
        let mut last = f64::NEG_INFINITY;
        for i in 0..=10 {
            let params = SelectionParams { temperature: i as f64 / 10.0, ..Default::default() };
            let t = dynamic_threshold(&members, &params, &mut rng(seed ^ 1)).unwrap();
            prop_assert!(t >= last);
            last = t;
        }
    }

    #[test]
    fn full_sample_global_score_is_centroid_cosine(seed in any::<u64>(), n in 1usize..10) {
        let mut r = rng(seed);
        let members = random_vectors(&mut r, n, 5);
        let query = random_vectors(&mut r, 1, 5).remove(0);
        let mut centroid = vec![0.0; 5];
        for m in &members {
            for (c, v) in centroid.iter_mut().zip(m) {
                *c += v / n as f64;
            }
        }
        let g = global_score(&query, &members, 20, n, &mut r).unwrap();
        prop_assert!((g - cosine(&query, &centroid).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn confidence_in_unit_interval(seed in any::<u64>(), n in 1usize..10) {
        let mut r = rng(seed);
        let members = random_vectors(&mut r, n, 4);
        let query = random_vectors(&mut r, 1, 4).remove(0);
        let c = confidence_score(&query, &members, &SelectionParams::default(), &mut r).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn softmax_is_a_distribution(seed in any::<u64>(), birnn in any::<bool>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, 3, 8);
        let ctx = if birnn { Contextualizer::BiRnn { hidden: 3 } } else { Contextualizer::Identity };
        let params = TaggerParams::init(corpus.dim, &labels(2), small_tagger(ctx), seed, &mut r);
        for e in random_examples(&mut r, &corpus, 5, 2) {
            let rep = span_representation(&params, &corpus, e.sentence, e.range);
            let p = predict_span(&rep, &params).unwrap();
            prop_assert_eq!(p.probs.len(), 3);
            prop_assert!(p.probs.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

/// Central differences on every coordinate against the analytic gradient.
fn gradient_check(seed: u64, ctx: Contextualizer) -> f64 {
    let mut r = rng(seed);
    let corpus = random_corpus(&mut r, 3, 6);
    let params = TaggerParams::init(corpus.dim, &labels(2), small_tagger(ctx), seed, &mut r);
    let batch = random_examples(&mut r, &corpus, 4, 2);
    let (_, analytic) = loss_and_gradient(&params, &corpus, &batch);
    let h = 1e-5;
    let numeric: Vec<f64> = (0..analytic.len())
        .map(|i| {
            let mut plus = params.clone();
            plus.values_mut()[i] += h;
            let mut minus = params.clone();
            minus.values_mut()[i] -= h;
            let fp = loss_and_gradient(&plus, &corpus, &batch).0;
            let fm = loss_and_gradient(&minus, &corpus, &batch).0;
            (fp - fm) / (2.0 * h)
        })
        .collect();
    relative_error(&analytic, &numeric)
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn identity_gradient_matches_finite_differences(seed in any::<u64>()) {
        let err = gradient_check(seed, Contextualizer::Identity);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn birnn_gradient_matches_finite_differences(seed in any::<u64>()) {
        let err = gradient_check(seed, Contextualizer::BiRnn { hidden: 3 });
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn training_ignores_input_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, 4, 8);
        let mut pos = random_examples(&mut r, &corpus, 6, 2);
        pos.iter_mut().for_each(|e| e.class %= 2);
        let mut neg = random_examples(&mut r, &corpus, 10, 2);
        neg.iter_mut().for_each(|e| e.class = 2);
        let cfg = TaggerConfig { epochs: 3, ..small_tagger(Contextualizer::Identity) };
        let init = TaggerParams::init(corpus.dim, &labels(2), cfg, seed, &mut r);
        let (a, _) = train_tagger(&corpus, &pos, &neg, init.clone(), &mut rng(seed)).unwrap();
        pos.reverse();
        neg.shuffle(&mut r);
        let (b, _) = train_tagger(&corpus, &pos, &neg, init, &mut rng(seed)).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, 3, 8);
        let pos = vec![Example { sentence: 0, range: TokenRange::new(0, 1), class: 0 }];
        let neg = random_examples(&mut r, &corpus, 4, 1).into_iter().map(|e| Example { class: 1, ..e }).collect::<Vec<_>>();
        let cfg = TaggerConfig { epochs: 3, learning_rate: 0.0, ..small_tagger(Contextualizer::Identity) };
        let init = TaggerParams::init(corpus.dim, &labels(1), cfg, seed, &mut r);
        let (trained, _) = train_tagger(&corpus, &pos, &neg, init.clone(), &mut r).unwrap();
        prop_assert_eq!(trained.values(), init.values());
    }
}

#[test]
fn same_seed_same_parameters() {
    let mut r = rng(5);
    let corpus = random_corpus(&mut r, 4, 8);
    let pos: Vec<_> = random_examples(&mut r, &corpus, 5, 2)
        .into_iter()
        .map(|e| Example {
            class: e.class % 2,
            ..e
        })
        .collect();
    let neg: Vec<_> = random_examples(&mut r, &corpus, 8, 2)
        .into_iter()
        .map(|e| Example { class: 2, ..e })
        .collect();
    let cfg = TaggerConfig {
        epochs: 5,
        contextualizer: Contextualizer::BiRnn { hidden: 3 },
        ..Default::default()
    };
    let run = || {
        let mut r = rng(9);
        let init = TaggerParams::init(corpus.dim, &labels(2), cfg, 9, &mut r);
        train_tagger(&corpus, &pos, &neg, init, &mut r).unwrap().0
    };
    assert_eq!(run().values(), run().values());
}

#[test]
fn separable_toy_set_is_learned() {
    // token embeddings: class 0 near +e0, class 1 near +e1, negatives near -e0-e1
    let mut r = rng(17);
    let mut corpus = random_corpus(&mut r, 6, 8);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (si, s) in corpus.sentences.iter_mut().enumerate() {
        for (i, t) in s.tokens.iter_mut().enumerate() {
            let class = (si + i) % 3;
            t.embedding = match class {
                0 => vec![1.0, 0.1, 0.0, 0.0],
                1 => vec![0.1, 1.0, 0.0, 0.0],
                _ => vec![-1.0, -1.0, 0.2, 0.0],
            };
            t.embedding[3] = r.gen_range(-0.1..0.1);
            let e = Example {
                sentence: si,
                range: TokenRange::new(i, i + 1),
                class,
            };
            if class == 2 {
                neg.push(e);
            } else {
                pos.push(e);
            }
        }
    }
    let cfg = TaggerConfig {
        epochs: 200,
        hidden: 8,
        negative_ratio: 1.0,
        ..Default::default()
    };
    let init = TaggerParams::init(4, &labels(2), cfg, 3, &mut r);
    let (params, log) = train_tagger(&corpus, &pos, &neg, init, &mut r).unwrap();
    let correct = pos
        .iter()
        .chain(&neg)
        .filter(|e| {
            let rep = span_representation(&params, &corpus, e.sentence, e.range);
            predict_span(&rep, &params).unwrap().class == e.class
        })
        .count();
    assert_eq!(correct, pos.len() + neg.len());
    assert!(log.epoch_loss.last() < log.epoch_loss.first());
}

fn tiny_synthetic() -> spanrules_core::synthetic::SyntheticData {
    generate(&SyntheticConfig {
        train_sentences: 120,
        dev_sentences: 30,
        test_sentences: 10,
        ..Default::default()
    })
}

fn quick_config(iterations: usize) -> BootstrapConfig {
    BootstrapConfig {
        iterations,
        tagger: TaggerConfig {
            epochs: 8,
            hidden: 16,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn high_precision_set_grows_and_rules_stay_unique() {
    let data = tiny_synthetic();
    let art = bootstrap(
        &quick_config(4),
        &data.train,
        Some(&data.dev),
        &data.seeds,
        &data.lexicon,
        &mut Silent,
    )
    .unwrap();
    for pair in art.reports.windows(2) {
        for (a, b) in pair[0].high_precision.iter().zip(&pair[1].high_precision) {
            assert!(
                b >= a,
                "{:?} -> {:?}",
                pair[0].high_precision,
                pair[1].high_precision
            );
        }
    }
    let skeletons: HashSet<_> = art.rules.rules.iter().map(|r| &r.skeleton).collect();
    assert_eq!(skeletons.len(), art.rules.len());
}

#[test]
fn single_iteration_is_the_seed_only_tagger() {
    let data = tiny_synthetic();
    let config = quick_config(1);
    let art = bootstrap(
        &config,
        &data.train,
        None,
        &data.seeds,
        &data.lexicon,
        &mut Silent,
    )
    .unwrap();

    // seed matches form H; the tagger trains on them against initial negatives
    let index = CandidateIndex::build(&data.train, &data.lexicon, config.max_span_len);
    let patterns = PatternIndex::build(&data.train, &index, config.ngram_max);
    let weak = apply_rules(&data.seeds, &patterns, config.tie_policy);
    let mut high = HighPrecisionSet::new(2);
    seed_high_precision(&weak, &data.train, &index, &mut high);
    let unit_example = |c: usize, class: usize| {
        let u = index.unit(c);
        Example {
            sentence: u.sentence,
            range: u.range,
            class,
        }
    };
    let pos: Vec<_> = high
        .labelled()
        .into_iter()
        .map(|(c, l)| unit_example(c, l.0))
        .collect();
    let neg: Vec<_> = index
        .negatives()
        .iter()
        .filter(|&&c| !high.contains(c))
        .map(|&c| unit_example(c, 2))
        .collect();
    let mut r = ChaCha8Rng::seed_from_u64(config.seed);
    r.set_stream(16 + 2);
    let init = TaggerParams::init(
        data.train.dim,
        &data.seeds.labels,
        config.tagger,
        config.seed,
        &mut r,
    );
    let (params, _) = train_tagger(&data.train, &pos, &neg, init, &mut r).unwrap();

    assert_eq!(art.best_params.values(), params.values());
    assert_eq!(art.best_rules.len(), data.seeds.len());
    // exported predictions come from that tagger alone
    let preds = predict_corpus(&params, &data.train, &index);
    let entities = preds.iter().filter(|p| p.class < 2).count();
    assert!(art.predictions.len() <= entities);
}

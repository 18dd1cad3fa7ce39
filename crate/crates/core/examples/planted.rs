//! Bootstraps on a synthetic corpus with planted rules and reports, per
//! iteration, dev scores and which planted rules were recovered.
//!
//! `cargo run --release -p spanrules-core --example planted -- [iterations] [seed]`
//! with optional `SYNTHETIC` JSON overriding generator settings.

use std::collections::HashSet;
use std::time::Instant;

use spanrules_core::driver::{
    bootstrap, gold_spans, micro_prf, BootstrapConfig, PredictionRecord, Prepared, Silent,
};
use spanrules_core::synthetic::{generate, label_counts, SyntheticConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let seed = args
        .next()
        .and_then(|a| a.parse().ok())
        .unwrap_or(SyntheticConfig::default().seed);
    // optional JSON overrides, e.g. SYNTHETIC='{"noise":0.4}'
    let mut synth: SyntheticConfig = std::env::var("SYNTHETIC")
        .map(|s| serde_json::from_str(&s).expect("SYNTHETIC json"))
        .unwrap_or_default();
    synth.seed = seed;
    let data = generate(&synth);
    println!("train gold {:?}", label_counts(&data.train));
    for r in &data.seeds.rules {
        println!("seed  {}", r.render(&data.seeds.labels));
    }
    let mut config = BootstrapConfig {
        iterations,
        ..Default::default()
    };
    // STRATEGY=rule_type etc.
    if let Ok(s) = std::env::var("STRATEGY") {
        config.strategy = serde_json::from_value(serde_json::Value::String(s)).expect("strategy");
    }
    let start = Instant::now();
    // NODEV exports the last iteration instead of the best one
    let dev = std::env::var("NODEV").is_err().then_some(&data.dev);
    let art = bootstrap(
        &config,
        &data.train,
        dev,
        &data.seeds,
        &data.lexicon,
        &mut Silent,
    )
    .expect("bootstrap");
    let elapsed = start.elapsed();

    for rep in &art.reports {
        let m = rep.dev.clone().unwrap_or_default();
        println!(
            "iter {:2}  +{:2} rules  |H| {:?}  P {:.3} R {:.3} F1 {:.3}  loss {:.4}",
            rep.iteration,
            rep.rules_selected,
            rep.high_precision,
            m.precision,
            m.recall,
            m.f1,
            rep.last_epoch_loss.unwrap_or(f64::NAN)
        );
    }
    let learned: HashSet<(String, String)> = art
        .rules
        .rules
        .iter()
        .map(|r| (r.skeleton.to_string(), art.rules.labels[r.label.0].clone()))
        .collect();
    let mut found = 0;
    for p in &data.planted {
        let hit = learned.contains(&(p.skeleton.to_string(), p.label.clone()));
        found += hit as usize;
        println!("{} {}", if hit { "found  " } else { "missing" }, p.render());
    }
    println!("planted recovered {found}/{}", data.planted.len());
    for r in art.rules.rules.iter().skip(data.seeds.len()) {
        println!("  learned {}", r.render(&art.rules.labels));
    }

    let test = Prepared::new(&data.test, &data.lexicon, &config);
    let keys: Vec<_> = test
        .predict(&art.best_params, &art.best_rules, &config)
        .iter()
        .map(PredictionRecord::key)
        .collect();
    let m = micro_prf(&keys, &gold_spans(&data.test));
    if std::env::var("MISSES").is_ok() {
        let pred: Vec<_> = keys.iter().collect();
        for g in gold_spans(&data.test) {
            if keys.contains(&g) {
                continue;
            }
            let s = &data.test.sentences[data.test.sentence_index(&g.sentence).unwrap()];
            let near: Vec<String> = pred
                .iter()
                .filter(|p| p.sentence == g.sentence && p.start < g.end && g.start < p.end)
                .map(|p| format!("{}..{} {}", p.start, p.end, p.label))
                .collect();
            println!(
                "miss {}..{} {} in \"{}\" near {:?}",
                g.start,
                g.end,
                g.label,
                s.text(),
                near
            );
        }
        let gold = gold_spans(&data.test);
        for p in &keys {
            if !gold.contains(p) {
                let s = &data.test.sentences[data.test.sentence_index(&p.sentence).unwrap()];
                println!(
                    "false {}..{} {} in \"{}\"",
                    p.start,
                    p.end,
                    p.label,
                    s.text()
                );
            }
        }
    }
    println!(
        "best iteration {}  test P {:.3} R {:.3} F1 {:.3}  elapsed {:.1}s",
        art.best_iteration,
        m.precision,
        m.recall,
        m.f1,
        elapsed.as_secs_f64()
    );
}

use serde_json::Value;
use spanrules_demo::{
    bootstrap_curve_json, sample_sentences_json, span_rules_json, threshold_explorer_json,
};

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.expect("operation succeeds")).unwrap()
}

#[test]
fn sentences_start_with_the_fixed_example() {
    let v = parse(sample_sentences_json(3, 5));
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 6);
    let words: Vec<&str> = list[0]["tokens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["text"].as_str().unwrap())
        .collect();
    assert_eq!(words[4..6], ["United", "States"]);
    assert!(list[1..]
        .iter()
        .any(|s| !s["gold"].as_array().unwrap().is_empty()));
}

#[test]
fn span_rules_of_fixed_example() {
    let v = parse(span_rules_json(3, 5, 0, 4, 6, 3));
    assert_eq!(v["span"], "United States");
    let patterns: Vec<&str> = v["patterns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_str().unwrap())
        .collect();
    assert_eq!(patterns.len(), 10);
    assert!(patterns.iter().any(|p| p.contains("move||to")));
    let rules = v["rules"].as_array().unwrap();
    // 1 TokenString, 3x3 pre∧post, 3 pre∧POS, 3 POS∧post, 2 dep∧POS
    assert_eq!(rules.len(), 1 + 9 + 3 + 3 + 2);
}

#[test]
fn span_rules_rejects_bad_ranges() {
    assert!(span_rules_json(3, 5, 0, 6, 4, 3).is_err());
    assert!(span_rules_json(3, 5, 0, 0, 99, 3).is_err());
    assert!(span_rules_json(3, 5, 99, 0, 1, 3).is_err());
}

#[test]
fn near_queries_pass_and_far_queries_fail() {
    let v = parse(threshold_explorer_json(
        r#"{"distances": [0.0, 3.0], "spread": 0.3}"#,
    ));
    let t = v["threshold"].as_f64().unwrap();
    assert!(t > 0.0 && t < 1.0);
    let q = v["queries"].as_array().unwrap();
    assert_eq!(q[0]["accepted"], true);
    assert_eq!(q[1]["accepted"], false);
    assert!(q[0]["confidence"].as_f64().unwrap() > q[1]["confidence"].as_f64().unwrap());
}

#[test]
fn threshold_scales_with_temperature() {
    let at = |tau: f64| {
        let v = parse(threshold_explorer_json(&format!(
            r#"{{"temperature": {tau}}}"#
        )));
        v["threshold"].as_f64().unwrap()
    };
    let (lo, hi) = (at(0.4), at(0.8));
    assert!((hi - 2.0 * lo).abs() < 1e-12, "{lo} {hi}");
}

#[test]
fn explorer_rejects_bad_requests() {
    assert!(threshold_explorer_json(r#"{"members": 1}"#).is_err());
    assert!(threshold_explorer_json(r#"{"bogus": 1}"#).is_err());
    assert!(threshold_explorer_json("not json").is_err());
}

#[test]
fn curve_reports_each_iteration() {
    let v = parse(bootstrap_curve_json(
        r#"{"train_sentences": 120, "dev_sentences": 40, "iterations": 2}"#,
    ));
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    for p in points {
        let f1 = p["f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
    assert_eq!(v["planted"].as_array().unwrap().len(), 10);
    assert!(!v["learned"].as_array().unwrap().is_empty());
    assert!(bootstrap_curve_json(r#"{"iterations": 0}"#).is_err());
}

use serde::{Deserialize, Serialize};

use crate::learner::SelectionStrategy;
use crate::rules::TiePolicy;
use crate::selection::SelectionParams;
use crate::tagger::TaggerConfig;

/// How overlapping entity predictions inside one sentence are resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    /// Keep the most confident span, drop anything overlapping it, repeat.
    #[default]
    GreedyNonOverlapping,
    /// Emit every non-`NEG` span.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub max_span_len: usize,
    /// Longest pre/post n-gram considered by rule patterns.
    pub ngram_max: usize,
    /// Rules admitted per group in the first iteration.
    pub k0: usize,
    /// Growth of the per-group budget per iteration.
    pub k_growth: usize,
    /// Minimum precision of a newly selected rule.
    pub precision_floor: f64,
    /// Share of each category's predictions used as members for rule scoring.
    pub confident_fraction: f64,
    pub selection: SelectionParams,
    pub iterations: usize,
    pub tie_policy: TiePolicy,
    pub strategy: SelectionStrategy,
    pub tagger: TaggerConfig,
    pub decoding: Decoding,
    /// Emit predictions by applying the learned rules instead of the tagger.
    pub rules_only: bool,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            max_span_len: 5,
            ngram_max: 3,
            k0: 20,
            k_growth: 1,
            precision_floor: 0.9,
            confident_fraction: 0.7,
            selection: SelectionParams::default(),
            iterations: 32,
            tie_policy: TiePolicy::Abstain,
            strategy: SelectionStrategy::EntityType,
            tagger: TaggerConfig::default(),
            decoding: Decoding::GreedyNonOverlapping,
            rules_only: false,
            seed: 42,
        }
    }
}

impl BootstrapConfig {
    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<(), String> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        need(self.max_span_len >= 1, "max_span_len must be >= 1");
        need(self.ngram_max >= 1, "ngram_max must be >= 1");
        need(self.iterations >= 1, "iterations must be >= 1");
        need(
            (0.0..=1.0).contains(&self.precision_floor),
            "precision_floor must lie in [0, 1]",
        );
        need(
            self.confident_fraction > 0.0 && self.confident_fraction <= 1.0,
            "confident_fraction must lie in (0, 1]",
        );
        need(
            self.selection.temperature > 0.0,
            "selection.temperature must be > 0",
        );
        need(
            self.selection.global_samples >= 1,
            "selection.global_samples must be >= 1",
        );
        need(
            self.selection.sample_size >= 1,
            "selection.sample_size must be >= 1",
        );
        need(
            self.selection.holdout_repeats >= 1,
            "selection.holdout_repeats must be >= 1",
        );
        let t = &self.tagger;
        need(t.hidden >= 1, "tagger.hidden must be >= 1");
        need(t.batch_size >= 1, "tagger.batch_size must be >= 1");
        need(t.learning_rate >= 0.0, "tagger.learning_rate must be >= 0");
        need(
            (0.0..1.0).contains(&t.momentum),
            "tagger.momentum must lie in [0, 1)",
        );
        need(t.negative_ratio > 0.0, "tagger.negative_ratio must be > 0");
        need(t.init_scale >= 0.0, "tagger.init_scale must be >= 0");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs.join("; "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = BootstrapConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<BootstrapConfig>(&json).unwrap(), c);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c: BootstrapConfig =
            serde_json::from_str(r#"{"k0": 60, "tagger": {"epochs": 5}}"#).unwrap();
        assert_eq!(c.k0, 60);
        assert_eq!(c.tagger.epochs, 5);
        assert_eq!(c.tagger.hidden, 64);
        assert_eq!(c.iterations, 32);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<BootstrapConfig>(r#"{"k_zero": 3}"#).is_err());
    }

    #[test]
    fn ranges_checked() {
        let c = BootstrapConfig {
            confident_fraction: 0.0,
            iterations: 0,
            ..Default::default()
        };
        let err = c.validate().unwrap_err();
        assert!(err.contains("confident_fraction") && err.contains("iterations"));
    }
}

//! Bootstrapped compound-rule learning for span-level named entity recognition.
//!
//! The pipeline enumerates candidate spans, labels them with logical rules,
//! filters weak labels by embedding similarity, trains a span tagger on the
//! survivors, and learns new rules from the tagger's confident predictions.

pub mod candidates;
pub mod corpus;
pub mod driver;
pub mod fixtures;
pub mod learner;
pub mod rules;
pub mod selection;
pub mod synthetic;
pub mod tagger;

//! Word sense induction from language-model substitute distributions.
//!
//! Each occurrence of an ambiguous word is described by the substitutes
//! two directional language models propose for it. The two directions
//! are combined into representatives, the representatives become sparse
//! bag-of-words vectors, and agglomerative clustering with a per-word
//! cluster-count search groups the occurrences into senses. The crate
//! also ships the evaluation suite (adjusted Rand index, V-measure,
//! paired F-score, trivial baselines, and a best-achievable-agreement
//! search) plus a pseudoword generator for controlled benchmarks.

pub mod analysis;
pub mod cluster;
pub mod combine;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod substitutes;
pub mod synthetic;
pub mod toy_lm;
pub mod vectorize;

pub use error::{Error, Result};

//! Tree-guided attention supervision for small causal language models.
//!
//! The pipeline: parse treebanks ([`treebank`]), turn each tree into a
//! pairwise syntactic distance matrix ([`distance`]), soften distances into
//! row-stochastic attention targets ([`supervision`]), tokenize with exact
//! word-to-subword alignment ([`tokenizer`]), and train a decoder-only
//! transformer ([`model`]) whose designated heads are pulled toward the
//! targets by a KL penalty ([`loss`], [`trainer`]). Trained models are
//! scored on minimal-pair syntactic suites and word-level perplexity
//! ([`eval`]).

pub mod distance;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod supervision;
pub mod synth;
#[cfg(test)]
pub(crate) mod testutil;
pub mod tokenizer;
pub mod trainer;
pub mod treebank;

pub use error::{Error, Result};

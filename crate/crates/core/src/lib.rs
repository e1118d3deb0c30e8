//! Decoding with an online trie prior: a frequency/length/recency prefix trie fused
//! with a base language model's next-token distribution, plus the drift-stream
//! harness and lexical metrics used to evaluate it.

pub mod cli;
pub mod config;
pub mod drift;
pub mod error;
pub mod fusion;
pub mod lm;
pub mod metrics;
pub mod prior;
pub mod scenario;
pub mod trie;
pub mod vocab;

pub use error::{Error, Result};
pub use fusion::{fuse_step, FusionConfig, FusionState, Strategy};
pub use lm::{LogitProvider, NGramModel};
pub use prior::{trie_prior, ScoringWeights};
pub use trie::PrefixTrie;
pub use vocab::{TokenId, Vocab};

use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("unknown token id {0}")]
    UnknownId(u32),

    #[error("token id {id} is outside a vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("invalid logit vector: {0}")]
    InvalidLogits(String),

    #[error("cannot insert an empty sequence")]
    EmptySequence,

    #[error("timestamp {got} precedes the last inserted timestamp {last}")]
    TimestampRegression { last: u64, got: u64 },

    #[error("corrupt trie snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("invalid scoring weights: {0}")]
    InvalidWeights(String),

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("logit provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("template {template:?} uses placeholder {placeholder:?} with no substitution in concept {concept:?}")]
    MissingSubstitution { template: String, placeholder: String, concept: String },

    #[error("invalid drift schedule: {0}")]
    InvalidSchedule(String),

    #[error("telemetry window is empty")]
    EmptyWindow,

    #[error("reference text is empty")]
    EmptyReference,

    #[error("cannot aggregate an empty list")]
    EmptyList,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by bad user input (configs, scenarios, files),
    /// as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidSchedule(_)
                | Error::InvalidWeights(_)
                | Error::MissingSubstitution { .. }
                | Error::CorruptSnapshot(_)
                | Error::VersionMismatch { .. }
                | Error::UnknownToken(_)
                | Error::EmptyCorpus
        )
    }
}

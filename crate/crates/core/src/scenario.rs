//! Scenario files and the experiment they describe.
//!
//! A scenario is TOML:
//!
//! ```toml
//! seed = 7
//! length = 200
//! templates = ["please activate my {PLAN} plan now"]
//!
//! [[concepts]]
//! id = "legacy"
//! values = { PLAN = "4G" }
//!
//! [[concepts]]
//! id = "current"
//! values = { PLAN = "5G" }
//!
//! [schedule]
//! kind = "abrupt"
//! switch_points = [100]
//! ```
//!
//! Optional keys: `start_time`, `time_step` (60), `prompt_tokens`,
//! `end_marker` ("</s>"), `max_new_tokens` (64), `schedule.ramp_start`,
//! `schedule.ramp_end`, and `train_concepts` (the concepts the built-in base
//! model is trained on; defaults to the first).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drift::{
    generate_stream, ConceptSpec, DriftKind, DriftSchedule, StreamItem, StreamOptions, Template,
    DEFAULT_MAX_NEW_TOKENS, DEFAULT_TIME_STEP,
};
use crate::error::{Error, Result};
use crate::lm::NGramModel;
use crate::trie::{PrefixTrie, TrieConfig};
use crate::vocab::{TokenId, Vocab};

pub const DEFAULT_START_TIME: u64 = 1_758_000_000;
pub const DEFAULT_END_MARKER: &str = "</s>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: DriftKind,
    #[serde(default)]
    pub switch_points: Vec<usize>,
    pub ramp_start: Option<usize>,
    pub ramp_end: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub length: usize,
    #[serde(default = "default_start_time")]
    pub start_time: u64,
    #[serde(default = "default_time_step")]
    pub time_step: u64,
    pub prompt_tokens: Option<usize>,
    #[serde(default = "default_end_marker")]
    pub end_marker: String,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub train_concepts: Vec<String>,
    pub templates: Vec<String>,
    pub concepts: Vec<ConceptSpec>,
    pub schedule: ScheduleSection,
}

fn default_start_time() -> u64 {
    DEFAULT_START_TIME
}
fn default_time_step() -> u64 {
    DEFAULT_TIME_STEP
}
fn default_end_marker() -> String {
    DEFAULT_END_MARKER.into()
}
fn default_max_new_tokens() -> usize {
    DEFAULT_MAX_NEW_TOKENS
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn schedule(&self) -> DriftSchedule {
        let ramp = match (self.schedule.ramp_start, self.schedule.ramp_end) {
            (Some(s), Some(e)) => Some((s, e)),
            _ => None,
        };
        DriftSchedule {
            kind: self.schedule.kind,
            concepts: self.concepts.clone(),
            switch_points: self.schedule.switch_points.clone(),
            ramp,
            seed: self.seed,
        }
    }

    pub fn stream_options(&self) -> StreamOptions {
        StreamOptions {
            length: self.length,
            start_time: self.start_time,
            time_step: self.time_step,
            prompt_tokens: self.prompt_tokens,
        }
    }

    pub fn parsed_templates(&self) -> Result<Vec<Template>> {
        self.templates.iter().map(|t| t.parse()).collect()
    }

    fn training_concepts(&self) -> Result<Vec<&ConceptSpec>> {
        if self.train_concepts.is_empty() {
            return self.concepts.first().map(|c| vec![c]).ok_or_else(|| Error::InvalidSchedule("no concepts".into()));
        }
        self.train_concepts
            .iter()
            .map(|id| {
                self.concepts
                    .iter()
                    .find(|c| &c.id == id)
                    .ok_or_else(|| Error::InvalidConfig(format!("train_concepts names unknown concept {id:?}")))
            })
            .collect()
    }
}

/// Everything derived from a scenario before any decoding: the vocabulary,
/// the stream, and the base model's training corpus.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub vocab: Vocab,
    pub stream: Vec<StreamItem>,
    /// One sequence per template and training concept, each ending in the end
    /// marker.
    pub training_corpus: Vec<Vec<TokenId>>,
    pub end_marker: TokenId,
}

impl Experiment {
    /// Token ids are assigned in order: end marker, training corpus, stream.
    pub fn prepare(scenario: Scenario) -> Result<Self> {
        if scenario.end_marker.split_whitespace().count() != 1 {
            return Err(Error::InvalidConfig("end_marker must be a single token".into()));
        }
        let templates = scenario.parsed_templates()?;
        let mut vocab = Vocab::new();
        let end_marker = vocab.intern(&scenario.end_marker);
        let mut training_corpus = Vec::new();
        for concept in scenario.training_concepts()? {
            for t in &templates {
                let (words, _) = t.instantiate(concept)?;
                let mut seq: Vec<TokenId> = words.iter().map(|w| vocab.intern(w)).collect();
                seq.push(end_marker);
                training_corpus.push(seq);
            }
        }
        let stream = generate_stream(&templates, &scenario.schedule(), &scenario.stream_options(), &mut vocab)?;
        Ok(Experiment { scenario, vocab, stream, training_corpus, end_marker })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::prepare(Scenario::load(path)?)
    }

    pub fn train_ngram(&self, order: usize, smoothing: f64) -> Result<NGramModel> {
        NGramModel::train(&self.training_corpus, order, smoothing, self.vocab.len())
    }

    /// Empty trie, or one pre-loaded with the training corpus one time step
    /// before the stream starts.
    pub fn initial_trie(&self, config: TrieConfig, warm_start: bool) -> Result<PrefixTrie> {
        let mut trie = PrefixTrie::new(config)?;
        if warm_start {
            let ts = self.scenario.start_time.saturating_sub(self.scenario.time_step);
            for seq in &self.training_corpus {
                trie.insert_sequence(seq, ts)?;
            }
        }
        Ok(trie)
    }
}

/// Stream item with text fields, as written by `odd simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub index: usize,
    pub timestamp: u64,
    pub concept: String,
    pub prompt: String,
    pub reference: String,
}

impl StreamRecord {
    pub fn from_item(item: &StreamItem, vocab: &Vocab) -> Result<Self> {
        Ok(StreamRecord {
            index: item.index,
            timestamp: item.timestamp,
            concept: item.concept.clone(),
            prompt: vocab.detokenize(&item.prompt)?,
            reference: vocab.detokenize(&item.reference)?,
        })
    }
}

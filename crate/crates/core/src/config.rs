//! Run configuration, read from TOML. Every key is optional:
//!
//! ```toml
//! strategy = "odd"          # odd | greedy | temp-scaled
//! seed = 7                  # overrides the scenario seed
//! trace = false             # keep per-step diagnostics in the records
//!
//! [trie]
//! n_max = 5
//! warm_start = false
//!
//! [scoring]
//! frequency = 0.3333333333333333
//! length = 0.3333333333333333
//! recency = 0.3333333333333334
//!
//! [fusion]
//! top_k = 5
//! continuity_scale = 3.0
//! temp_scaled_temperature = 0.7
//! use_disagreement = true
//! use_continuity = true
//!
//! [base_lm]
//! order = 3
//! smoothing = 0.01
//! model = "model.json"      # pre-trained n-gram model instead of training
//! connect = "127.0.0.1:7878" # external logits server over TCP
//! command = ["python3", "server.py"] # external logits server over stdio
//!
//! [output]
//! dir = "out"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    FusionConfig, Strategy, TemperatureMode, DEFAULT_CONTINUITY_SCALE, DEFAULT_TEMP_SCALED_TEMPERATURE, DEFAULT_TOP_K,
};
use crate::lm::{ExternalProvider, LogitProvider, NGramModel};
use crate::prior::ScoringWeights;
use crate::scenario::Experiment;
use crate::trie::{TrieConfig, DEFAULT_N_MAX};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "ODD_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrieSection {
    pub n_max: usize,
    pub warm_start: bool,
}

impl Default for TrieSection {
    fn default() -> Self {
        TrieSection { n_max: DEFAULT_N_MAX, warm_start: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub top_k: usize,
    pub continuity_scale: f64,
    pub temp_scaled_temperature: f64,
    pub use_disagreement: bool,
    pub use_continuity: bool,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            top_k: DEFAULT_TOP_K,
            continuity_scale: DEFAULT_CONTINUITY_SCALE,
            temp_scaled_temperature: DEFAULT_TEMP_SCALED_TEMPERATURE,
            use_disagreement: true,
            use_continuity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseLmSection {
    pub order: usize,
    pub smoothing: f64,
    pub model: Option<PathBuf>,
    pub connect: Option<String>,
    pub command: Option<Vec<String>>,
}

impl Default for BaseLmSection {
    fn default() -> Self {
        BaseLmSection { order: 3, smoothing: 0.01, model: None, connect: None, command: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub seed: Option<u64>,
    pub trace: bool,
    pub trie: TrieSection,
    pub scoring: ScoringWeights,
    pub fusion: FusionSection,
    pub base_lm: BaseLmSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: Strategy::Odd,
            seed: None,
            trace: false,
            trie: TrieSection::default(),
            scoring: ScoringWeights::default(),
            fusion: FusionSection::default(),
            base_lm: BaseLmSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `path` if given, else the file named by `ODD_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trie_config().validate()?;
        self.scoring.validate()?;
        for s in Strategy::ALL {
            self.fusion_config(s).validate()?;
        }
        let lm = &self.base_lm;
        if lm.order == 0 {
            return Err(Error::InvalidConfig("base_lm.order must be >= 1".into()));
        }
        if !(lm.smoothing > 0.0 && lm.smoothing.is_finite()) {
            return Err(Error::InvalidConfig("base_lm.smoothing must be positive".into()));
        }
        let sources = [lm.model.is_some(), lm.connect.is_some(), lm.command.is_some()];
        if sources.iter().filter(|&&b| b).count() > 1 {
            return Err(Error::InvalidConfig("base_lm: set at most one of model, connect, command".into()));
        }
        if lm.command.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(Error::InvalidConfig("base_lm.command is empty".into()));
        }
        Ok(())
    }

    pub fn trie_config(&self) -> TrieConfig {
        TrieConfig { n_max: self.trie.n_max }
    }

    /// Preset for `strategy` with this config's knobs applied.
    pub fn fusion_config(&self, strategy: Strategy) -> FusionConfig {
        let mut c = FusionConfig::preset(strategy);
        c.top_k = self.fusion.top_k;
        c.continuity_scale = self.fusion.continuity_scale;
        c.use_disagreement = self.fusion.use_disagreement;
        c.use_continuity = self.fusion.use_continuity;
        if strategy == Strategy::TempScaled {
            c.temperature = TemperatureMode::Fixed(self.fusion.temp_scaled_temperature);
        }
        c
    }

    /// Base model for `experiment`: external server, saved model, or a fresh
    /// n-gram model trained on the scenario's training concepts.
    pub fn base_model(&self, experiment: &Experiment) -> Result<Box<dyn LogitProvider>> {
        let vocab = experiment.vocab.len();
        let lm = &self.base_lm;
        if let Some(addr) = &lm.connect {
            return Ok(Box::new(ExternalProvider::connect(addr.as_str(), vocab)?));
        }
        if let Some(cmd) = &lm.command {
            return Ok(Box::new(ExternalProvider::spawn(&cmd[0], &cmd[1..], vocab)?));
        }
        if let Some(path) = &lm.model {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read model {}: {e}", path.display())))?;
            let model = NGramModel::from_json(&text)?;
            if model.vocab_size() != vocab {
                return Err(Error::InvalidConfig(format!(
                    "model vocabulary {} does not match scenario vocabulary {vocab}",
                    model.vocab_size()
                )));
            }
            return Ok(Box::new(model));
        }
        Ok(Box::new(experiment.train_ngram(lm.order, lm.smoothing)?))
    }
}

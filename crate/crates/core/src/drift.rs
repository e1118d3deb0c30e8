//! Placeholder-drift streams and the prequential decoding loop.
//!
//! Templates are whitespace-tokenized sentences whose `{NAME}` tokens are
//! filled from the active concept. A [`DriftSchedule`] decides which concept
//! is active for each stream position:
//!
//! * abrupt: the concept index steps up at each switch point,
//! * incremental: the same mechanics through three or more concepts,
//! * gradual: two concepts, the new one drawn with a probability that ramps
//!   linearly from 0 to 1.
//!
//! [`run_online`] decodes every item with the state built from earlier items
//! only, then inserts the item's reference into the trie.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse_step, jensen_shannon, FusionConfig, FusionState, StepDiagnostics};
use crate::lm::LogitProvider;
use crate::metrics::{evaluate_pair, MetricBundle};
use crate::prior::{trie_prior, ScoringWeights};
use crate::trie::PrefixTrie;
use crate::vocab::{TokenId, Vocab};

pub const DEFAULT_TIME_STEP: u64 = 60;
pub const DEFAULT_MAX_NEW_TOKENS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Word(String),
    Slot(String),
}

/// A sentence with `{NAME}` placeholder tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
    parts: Vec<Part>,
}

impl Template {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Slot(name) => Some(name.as_str()),
            Part::Word(_) => None,
        })
    }

    /// Words before the first placeholder.
    pub fn lead_len(&self) -> usize {
        self.parts.iter().take_while(|p| matches!(p, Part::Word(_))).count()
    }

    /// Fills the placeholders from `concept`; returns the words and the span
    /// each placeholder occupies.
    pub fn instantiate(&self, concept: &ConceptSpec) -> Result<(Vec<String>, Vec<SlotSpan>)> {
        let mut words = Vec::new();
        let mut slots = Vec::new();
        for part in &self.parts {
            match part {
                Part::Word(w) => words.push(w.clone()),
                Part::Slot(name) => {
                    let value = concept.values.get(name).ok_or_else(|| Error::MissingSubstitution {
                        template: self.text.clone(),
                        placeholder: name.clone(),
                        concept: concept.id.clone(),
                    })?;
                    let start = words.len();
                    words.extend(value.split_whitespace().map(str::to_owned));
                    slots.push(SlotSpan { name: name.clone(), start, len: words.len() - start });
                }
            }
        }
        Ok((words, slots))
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<Part> = text
            .split_whitespace()
            .map(|w| {
                let inner = w.strip_prefix('{').and_then(|s| s.strip_suffix('}'));
                match inner {
                    Some(name) if !name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_') => {
                        Part::Slot(name.to_owned())
                    }
                    _ => Part::Word(w.to_owned()),
                }
            })
            .collect();
        if parts.is_empty() {
            return Err(Error::InvalidConfig("empty template".into()));
        }
        if !matches!(parts[0], Part::Word(_)) {
            return Err(Error::InvalidConfig(format!("template {text:?} must start with a literal word")));
        }
        Ok(Template { text: text.to_owned(), parts })
    }
}

/// One concept: a value for every placeholder name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub id: String,
    pub values: BTreeMap<String, String>,
}

impl ConceptSpec {
    pub fn new(id: &str, values: &[(&str, &str)]) -> Self {
        ConceptSpec { id: id.to_owned(), values: values.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

/// Placeholder names whose values differ between two concepts.
pub fn drifted_slots(before: &ConceptSpec, after: &ConceptSpec) -> BTreeSet<String> {
    after.values.iter().filter(|(k, v)| before.values.get(*k) != Some(*v)).map(|(k, _)| k.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftKind {
    Abrupt,
    Incremental,
    Gradual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSchedule {
    pub kind: DriftKind,
    pub concepts: Vec<ConceptSpec>,
    /// Positions where the next concept takes over (abrupt, incremental).
    #[serde(default)]
    pub switch_points: Vec<usize>,
    /// `[start, end)` of the linear mixing ramp (gradual).
    #[serde(default)]
    pub ramp: Option<(usize, usize)>,
    pub seed: u64,
}

impl DriftSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        if self.concepts.len() < 2 {
            return bad("at least two concepts are required".into());
        }
        match self.kind {
            DriftKind::Abrupt | DriftKind::Incremental => {
                if self.kind == DriftKind::Incremental && self.concepts.len() < 3 {
                    return bad("incremental drift needs at least one intermediate concept".into());
                }
                if self.switch_points.len() != self.concepts.len() - 1 {
                    return bad(format!(
                        "{} concepts need {} switch points, got {}",
                        self.concepts.len(),
                        self.concepts.len() - 1,
                        self.switch_points.len()
                    ));
                }
                if self.switch_points.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("switch points must be strictly increasing".into());
                }
            }
            DriftKind::Gradual => {
                if self.concepts.len() != 2 {
                    return bad("gradual drift mixes exactly two concepts".into());
                }
                match self.ramp {
                    Some((start, end)) if start < end => {}
                    _ => return bad("gradual drift needs a ramp with start < end".into()),
                }
            }
        }
        Ok(())
    }

    /// Probability that item `index` is drawn from the incoming concept.
    pub fn mixing_probability(&self, index: usize) -> f64 {
        match (self.kind, self.ramp) {
            (DriftKind::Gradual, Some((start, end))) => {
                if index < start {
                    0.0
                } else if index >= end {
                    1.0
                } else {
                    (index - start) as f64 / (end - start) as f64
                }
            }
            _ => 0.0,
        }
    }

    fn stepwise_concept(&self, index: usize) -> usize {
        self.switch_points.iter().take_while(|&&s| s <= index).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub name: String,
    /// Word offset in the reference.
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamItem {
    pub index: usize,
    pub prompt: Vec<TokenId>,
    pub reference: Vec<TokenId>,
    pub timestamp: u64,
    pub concept: String,
    pub template: usize,
    pub slots: Vec<SlotSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamOptions {
    pub length: usize,
    pub start_time: u64,
    pub time_step: u64,
    /// Cap on prompt words; the prompt never reaches past the first placeholder.
    pub prompt_tokens: Option<usize>,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions { length: 200, start_time: 1_700_000_000, time_step: DEFAULT_TIME_STEP, prompt_tokens: None }
    }
}

/// Deterministic stream for `schedule.seed`. New words are registered in
/// `vocab` as they first appear.
pub fn generate_stream(
    templates: &[Template],
    schedule: &DriftSchedule,
    options: &StreamOptions,
    vocab: &mut Vocab,
) -> Result<Vec<StreamItem>> {
    if templates.is_empty() {
        return Err(Error::InvalidSchedule("no templates".into()));
    }
    if options.time_step == 0 {
        return Err(Error::InvalidSchedule("time step must be positive".into()));
    }
    schedule.validate()?;
    for concept in &schedule.concepts {
        for t in templates {
            t.instantiate(concept)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut items = Vec::with_capacity(options.length);
    for index in 0..options.length {
        let template = rng.random_range(0..templates.len());
        let concept = match schedule.kind {
            DriftKind::Gradual => {
                let u: f64 = rng.random();
                usize::from(u < schedule.mixing_probability(index))
            }
            _ => schedule.stepwise_concept(index),
        };
        let spec = &schedule.concepts[concept];
        let t = &templates[template];
        let (words, slots) = t.instantiate(spec)?;
        let reference: Vec<TokenId> = words.iter().map(|w| vocab.intern(w)).collect();
        let lead = t.lead_len();
        let prompt_len = options.prompt_tokens.map_or(lead, |p| p.clamp(1, lead));
        items.push(StreamItem {
            index,
            prompt: reference[..prompt_len].to_vec(),
            reference,
            timestamp: options.start_time + index as u64 * options.time_step,
            concept: spec.id.clone(),
            template,
            slots,
        });
    }
    Ok(items)
}

/// Jensen-Shannon distance (square root of the divergence, nats) between the
/// unigram distributions of two token windows.
pub fn lexical_drift_telemetry<T: Eq + Hash + Ord + Clone>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let count = |w: &[T]| {
        let mut m: HashMap<T, usize> = HashMap::new();
        for t in w {
            *m.entry(t.clone()).or_default() += 1;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    let mut support: Vec<&T> = ca.keys().chain(cb.keys()).collect();
    support.sort();
    support.dedup();
    let p: Vec<f64> = support.iter().map(|t| *ca.get(*t).unwrap_or(&0) as f64 / a.len() as f64).collect();
    let q: Vec<f64> = support.iter().map(|t| *cb.get(*t).unwrap_or(&0) as f64 / b.len() as f64).collect();
    Ok(jensen_shannon(&p, &q).sqrt())
}

/// Distances between consecutive windows of `window` items' references.
pub fn drift_profile(stream: &[StreamItem], window: usize) -> Result<Vec<(usize, f64)>> {
    if window == 0 {
        return Err(Error::EmptyWindow);
    }
    let chunks: Vec<(usize, Vec<TokenId>)> = stream
        .chunks(window)
        .map(|c| (c[0].index, c.iter().flat_map(|i| i.reference.iter().copied()).collect()))
        .collect();
    chunks.windows(2).map(|w| Ok((w[1].0, lexical_drift_telemetry(&w[0].1, &w[1].1)?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    pub fusion: FusionConfig,
    pub weights: ScoringWeights,
    pub max_new_tokens: usize,
    /// Appended to references on insertion; generation stops when emitted.
    pub end_marker: Option<TokenId>,
    /// Keep per-step diagnostics in the records.
    pub trace: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            fusion: FusionConfig::default(),
            weights: ScoringWeights::default(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            end_marker: None,
            trace: false,
        }
    }
}

/// One decoding step as written to trace records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    #[serde(flatten)]
    pub diagnostics: StepDiagnostics,
    /// The trie prior the step was fused with, by token id.
    pub prior: Vec<(TokenId, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeSummary {
    pub steps: usize,
    pub bypass_steps: usize,
    pub clamped_calibrations: usize,
    pub mean_lm_weight: f64,
    pub mean_disagreement: f64,
}

impl DecodeSummary {
    fn from_steps(steps: &[TraceStep]) -> Self {
        let fused: Vec<&StepDiagnostics> = steps.iter().map(|s| &s.diagnostics).filter(|d| !d.bypass).collect();
        let mean = |f: fn(&StepDiagnostics) -> f64| {
            if fused.is_empty() {
                0.0
            } else {
                fused.iter().map(|d| f(d)).sum::<f64>() / fused.len() as f64
            }
        };
        DecodeSummary {
            steps: steps.len(),
            bypass_steps: steps.len() - fused.len(),
            clamped_calibrations: fused.iter().filter(|d| d.calibration.is_clamped()).count(),
            mean_lm_weight: mean(|d| d.lm_weight),
            mean_disagreement: mean(|d| d.disagreement),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub index: usize,
    pub concept: String,
    pub prompt: String,
    pub reference: String,
    pub hypothesis: String,
    pub metrics: MetricBundle,
    pub summary: DecodeSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<TraceStep>>,
}

/// Decodes a continuation of `prompt`. The returned tokens exclude the prompt
/// and the end marker.
pub fn decode<P: LogitProvider + ?Sized>(
    prompt: &[TokenId],
    trie: &PrefixTrie,
    provider: &mut P,
    config: &HarnessConfig,
    now: u64,
) -> Result<(Vec<TokenId>, Vec<TraceStep>)> {
    let mut prefix = prompt.to_vec();
    let mut state = FusionState::default();
    let mut steps = Vec::new();
    for _ in 0..config.max_new_tokens {
        let z = provider.logits(&prefix)?;
        if z.len() != provider.vocab_size() {
            return Err(Error::InvalidLogits(format!("provider returned {} logits", z.len())));
        }
        let prior = if config.fusion.use_prior {
            trie_prior(trie, &prefix, now, &config.weights)?.map(|(_, dist)| dist)
        } else {
            None
        };
        let out = fuse_step(&z, prior.as_ref(), &mut state, &config.fusion)?;
        let dump = match (&prior, config.trace) {
            (Some(p), true) => p.iter().collect(),
            _ => Vec::new(),
        };
        steps.push(TraceStep { diagnostics: out.diagnostics, prior: dump });
        if Some(out.token) == config.end_marker {
            break;
        }
        prefix.push(out.token);
    }
    Ok((prefix.split_off(prompt.len()), steps))
}

/// Test-then-train over the stream: decode each item with the current trie,
/// score it, then insert its reference.
pub fn run_online<P: LogitProvider + ?Sized>(
    stream: &[StreamItem],
    trie: &mut PrefixTrie,
    provider: &mut P,
    config: &HarnessConfig,
    vocab: &Vocab,
) -> Result<Vec<ItemRecord>> {
    config.fusion.validate()?;
    config.weights.validate()?;
    let mut records = Vec::with_capacity(stream.len());
    for item in stream {
        let (generated, steps) = decode(&item.prompt, trie, provider, config, item.timestamp)?;
        let mut hyp = item.prompt.clone();
        hyp.extend_from_slice(&generated);
        let reference = vocab.detokenize(&item.reference)?;
        let hypothesis = vocab.detokenize(&hyp)?;
        records.push(ItemRecord {
            index: item.index,
            concept: item.concept.clone(),
            prompt: vocab.detokenize(&item.prompt)?,
            metrics: evaluate_pair(&reference, &hypothesis)?,
            reference,
            hypothesis,
            summary: DecodeSummary::from_steps(&steps),
            steps: config.trace.then_some(steps),
        });

        let mut observed = item.reference.clone();
        observed.extend(config.end_marker);
        trie.insert_sequence(&observed, item.timestamp)?;
    }
    Ok(records)
}

/// Fraction of placeholder spans reproduced word-for-word at their reference
/// position, over items with `index >= from_index`. Only spans named in
/// `slots` count. `None` when no span qualifies.
pub fn slot_accuracy(
    stream: &[StreamItem],
    records: &[ItemRecord],
    from_index: usize,
    slots: &BTreeSet<String>,
) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (item, rec) in stream.iter().zip(records) {
        if item.index < from_index {
            continue;
        }
        let reference: Vec<&str> = rec.reference.split_whitespace().collect();
        let hypothesis: Vec<&str> = rec.hypothesis.split_whitespace().collect();
        for span in item.slots.iter().filter(|s| slots.contains(&s.name)) {
            total += 1;
            let want = &reference[span.start..span.start + span.len];
            if hypothesis.get(span.start..span.start + span.len) == Some(want) {
                hits += 1;
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Strategy;
    use crate::lm::{NGramModel, UniformProvider};

    fn concepts() -> Vec<ConceptSpec> {
        vec![
            ConceptSpec::new("c1", &[("PLAN", "4G"), ("BRAND", "TelcoOne")]),
            ConceptSpec::new("c2", &[("PLAN", "5G"), ("BRAND", "TalkNow")]),
            ConceptSpec::new("c3", &[("PLAN", "6G"), ("BRAND", "TalkNow")]),
        ]
    }

    fn templates() -> Vec<Template> {
        ["please activate your {PLAN} plan", "how do i cancel {BRAND} {PLAN} service"]
            .iter()
            .map(|t| t.parse().unwrap())
            .collect()
    }

    fn schedule(kind: DriftKind, n: usize, switch_points: Vec<usize>) -> DriftSchedule {
        DriftSchedule { kind, concepts: concepts()[..n].to_vec(), switch_points, ramp: None, seed: 9 }
    }

    fn opts(length: usize) -> StreamOptions {
        StreamOptions { length, ..StreamOptions::default() }
    }

    #[test]
    fn template_parsing() {
        let t: Template = "call {BRAND} about {PLAN}".parse().unwrap();
        assert_eq!(t.placeholders().collect::<Vec<_>>(), vec!["BRAND", "PLAN"]);
        assert_eq!(t.lead_len(), 1);
        assert!("{PLAN} first".parse::<Template>().is_err());
        let (words, slots) = t.instantiate(&ConceptSpec::new("x", &[("BRAND", "Talk Now"), ("PLAN", "5G")])).unwrap();
        assert_eq!(words.join(" "), "call Talk Now about 5G");
        assert_eq!(slots[0], SlotSpan { name: "BRAND".into(), start: 1, len: 2 });
        assert_eq!(slots[1], SlotSpan { name: "PLAN".into(), start: 4, len: 1 });
    }

    #[test]
    fn abrupt_switch() {
        let mut v = Vocab::new();
        let s = generate_stream(&templates(), &schedule(DriftKind::Abrupt, 2, vec![50]), &opts(100), &mut v).unwrap();
        assert!(s[..50].iter().all(|i| i.concept == "c1"));
        assert!(s[50..].iter().all(|i| i.concept == "c2"));
        assert!(s.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert!(s.iter().all(|i| !i.reference.is_empty() && i.reference.starts_with(&i.prompt)));
    }

    #[test]
    fn incremental_boundaries() {
        let mut v = Vocab::new();
        let s = generate_stream(&templates(), &schedule(DriftKind::Incremental, 3, vec![30, 60]), &opts(90), &mut v)
            .unwrap();
        let first = |c: &str| s.iter().position(|i| i.concept == c).unwrap();
        assert_eq!((first("c1"), first("c2"), first("c3")), (0, 30, 60));
        assert!(s[29].concept == "c1" && s[59].concept == "c2");
    }

    #[test]
    fn gradual_ramp_is_reproducible() {
        let sched = DriftSchedule { ramp: Some((0, 100)), ..schedule(DriftKind::Gradual, 2, vec![]) };
        let mut v = Vocab::new();
        let a = generate_stream(&templates(), &sched, &opts(100), &mut v).unwrap();
        let b = generate_stream(&templates(), &sched, &opts(100), &mut Vocab::new()).unwrap();
        assert_eq!(a, b);
        let frac = |s: &[StreamItem]| s.iter().filter(|i| i.concept == "c2").count() as f64 / s.len() as f64;
        assert!(frac(&a[..50]) < frac(&a[50..]));
        assert_eq!(sched.mixing_probability(0), 0.0);
        assert_eq!(sched.mixing_probability(100), 1.0);
        assert!((0..100).all(|i| sched.mixing_probability(i) <= sched.mixing_probability(i + 1)));
    }

    #[test]
    fn invalid_schedules() {
        let mut v = Vocab::new();
        let t = templates();
        let o = opts(10);
        for s in [
            schedule(DriftKind::Abrupt, 2, vec![]),
            schedule(DriftKind::Incremental, 2, vec![5]),
            schedule(DriftKind::Incremental, 3, vec![6, 5]),
            schedule(DriftKind::Gradual, 2, vec![]),
            DriftSchedule { ramp: Some((5, 5)), ..schedule(DriftKind::Gradual, 2, vec![]) },
        ] {
            assert!(matches!(generate_stream(&t, &s, &o, &mut v), Err(Error::InvalidSchedule(_))), "{s:?}");
        }
        let mut missing = schedule(DriftKind::Abrupt, 2, vec![5]);
        missing.concepts[1].values.remove("BRAND");
        assert!(matches!(generate_stream(&t, &missing, &o, &mut v), Err(Error::MissingSubstitution { .. })));
    }

    #[test]
    fn telemetry_examples() {
        assert_eq!(lexical_drift_telemetry(&["a", "b"], &["b", "a"]).unwrap(), 0.0);
        let d = lexical_drift_telemetry(&["a", "a"], &["b", "c"]).unwrap();
        assert!((d - 2f64.ln().sqrt()).abs() < 1e-12);
        let d = lexical_drift_telemetry(&["a", "a", "b"], &["a", "b", "b"]).unwrap();
        assert!((d * d - 0.056633012265132426).abs() < 1e-12);
        assert!((d - 0.23797691540385263).abs() < 1e-12);
        assert!(matches!(lexical_drift_telemetry::<&str>(&[], &["a"]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn profile_peaks_at_switch() {
        let mut v = Vocab::new();
        let s = generate_stream(&templates(), &schedule(DriftKind::Abrupt, 2, vec![40]), &opts(80), &mut v).unwrap();
        let p = drift_profile(&s, 20).unwrap();
        let peak = p.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(peak.0, 40);
    }

    fn setup(length: usize) -> (Vec<StreamItem>, Vocab, TokenId) {
        let mut v = Vocab::new();
        let end = v.intern("</s>");
        let s = generate_stream(&templates(), &schedule(DriftKind::Abrupt, 2, vec![length / 2]), &opts(length), &mut v)
            .unwrap();
        (s, v, end)
    }

    #[test]
    fn cold_start_is_pure_bypass() {
        let (s, v, end) = setup(6);
        let mut trie = PrefixTrie::default();
        let mut lm = UniformProvider { vocab: v.len() };
        let cfg = HarnessConfig { end_marker: Some(end), max_new_tokens: 4, trace: true, ..Default::default() };
        let recs = run_online(&s[..1], &mut trie, &mut lm, &cfg, &v).unwrap();
        let steps = recs[0].steps.as_ref().unwrap();
        assert!(steps.iter().all(|s| s.diagnostics.bypass && s.prior.is_empty()));
        assert_eq!(recs[0].summary.bypass_steps, recs[0].summary.steps);
        assert!(!trie.is_empty());
    }

    #[test]
    fn trie_prior_sees_new_value_after_one_observation() {
        let mut v = Vocab::new();
        let seen = v.tokenize("please activate your plan 5G", true).unwrap();
        let mut trie = PrefixTrie::default();
        trie.insert_sequence(&seen, 10).unwrap();
        let (_, dist) = trie_prior(&trie, &v.lookup("activate your plan").unwrap(), 20, &ScoringWeights::default())
            .unwrap()
            .unwrap();
        assert!(dist.get(v.get("5G").unwrap()) > 0.0);
    }

    #[test]
    fn truncation_and_replay_determinism() {
        let (s, v, end) = setup(30);
        let corpus: Vec<Vec<TokenId>> = s[..10].iter().map(|i| i.reference.clone()).collect();
        let lm = NGramModel::train(&corpus, 3, 0.05, v.len()).unwrap();
        let cfg = HarnessConfig { end_marker: Some(end), max_new_tokens: 12, trace: true, ..Default::default() };
        let full = run_online(&s, &mut PrefixTrie::default(), &mut lm.clone(), &cfg, &v).unwrap();
        let again = run_online(&s, &mut PrefixTrie::default(), &mut lm.clone(), &cfg, &v).unwrap();
        assert_eq!(serde_json::to_string(&full).unwrap(), serde_json::to_string(&again).unwrap());
        for cut in [1, 7, 15, 29] {
            let part = run_online(&s[..cut], &mut PrefixTrie::default(), &mut lm.clone(), &cfg, &v).unwrap();
            assert_eq!(part[..], full[..cut]);
        }
    }

    #[test]
    fn greedy_strategy_ignores_trie() {
        let (s, v, end) = setup(20);
        let corpus: Vec<Vec<TokenId>> = s[..3].iter().map(|i| i.reference.clone()).collect();
        let lm = NGramModel::train(&corpus, 2, 0.1, v.len()).unwrap();
        let mut cfg = HarnessConfig { end_marker: Some(end), max_new_tokens: 8, ..Default::default() };
        cfg.fusion = FusionConfig::preset(Strategy::Greedy);
        let recs = run_online(&s, &mut PrefixTrie::default(), &mut lm.clone(), &cfg, &v).unwrap();
        assert!(recs.iter().all(|r| r.summary.bypass_steps == r.summary.steps));
    }

    #[test]
    fn slot_accuracy_counts_spans() {
        let (s, v, _) = setup(4);
        let recs: Vec<ItemRecord> = s
            .iter()
            .map(|i| {
                let r = v.detokenize(&i.reference).unwrap();
                ItemRecord {
                    index: i.index,
                    concept: i.concept.clone(),
                    prompt: String::new(),
                    reference: r.clone(),
                    hypothesis: if i.index % 2 == 0 { r } else { "please".into() },
                    metrics: MetricBundle::default(),
                    summary: DecodeSummary::default(),
                    steps: None,
                }
            })
            .collect();
        let plan: BTreeSet<String> = ["PLAN".to_string()].into();
        assert_eq!(slot_accuracy(&s, &recs, 0, &plan), Some(0.5));
        assert_eq!(slot_accuracy(&s, &recs, 99, &plan), None);
        assert_eq!(drifted_slots(&concepts()[1], &concepts()[2]), plan);
    }
}

//! Trie prior: candidate collection, feature scoring and top-preserving
//! normalization.
//!
//! For a decoding prefix every suffix is looked up in the trie and the
//! children of each matched node become raw candidates. Scoring is two-pass:
//! the whole raw set is gathered first, then features are normalized against
//! the set-wide maxima:
//!
//! ```text
//! F' = ln(1 + F) / max ln(1 + F)
//! L' = min(1, L / |prefix|)
//! R' = exp(-(Δ - Δmin) / (Δmax - Δmin)),   Δ = now - R   (R' = 1 if Δmax = Δmin)
//! score = λF·F' + λL·L' + λR·R'
//! ```
//!
//! Each token keeps its best-scoring occurrence. The shift by `Δmin` gives the
//! freshest candidate `R' = 1` whatever the clock, which also makes scores
//! invariant to a common shift of all timestamps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trie::{Features, PrefixTrie};
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RawCandidate {
    pub token: TokenId,
    pub features: Features,
    pub suffix_len: usize,
}

/// Convex weights over (frequency, length, recency).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringWeights {
    pub frequency: f64,
    pub length: f64,
    pub recency: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        ScoringWeights { frequency: 1.0 / 3.0, length: 1.0 / 3.0, recency: 1.0 / 3.0 }
    }
}

impl ScoringWeights {
    pub fn new(frequency: f64, length: f64, recency: f64) -> Result<Self> {
        let w = ScoringWeights { frequency, length, recency };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.frequency, self.length, self.recency];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(format!("weights must be finite and non-negative: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedFeatures {
    pub frequency: f64,
    pub length: f64,
    pub recency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub score: f64,
    pub normalized: NormalizedFeatures,
    pub features: Features,
    pub suffix_len: usize,
}

/// Deduplicated candidates keyed by token, each with its best score.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CandidateSet {
    pub entries: BTreeMap<TokenId, ScoredCandidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score(&self, token: TokenId) -> Option<f64> {
        self.entries.get(&token).map(|c| c.score)
    }

    /// Highest score with its token; ties go to the smallest id.
    pub fn best(&self) -> Option<(TokenId, f64)> {
        let mut best: Option<(TokenId, f64)> = None;
        for (&t, c) in &self.entries {
            if best.is_none_or(|(_, s)| c.score > s) {
                best = Some((t, c.score));
            }
        }
        best
    }
}

/// Probability mass over a small token support; zero everywhere else.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseDistribution {
    probs: BTreeMap<TokenId, f64>,
}

impl SparseDistribution {
    /// Builds a distribution from explicit masses. Entries of zero are
    /// dropped; the rest must be positive and sum to one.
    pub fn from_probs(probs: impl IntoIterator<Item = (TokenId, f64)>) -> Result<Self> {
        let probs: BTreeMap<TokenId, f64> = probs.into_iter().filter(|&(_, p)| p != 0.0).collect();
        if probs.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if probs.values().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("probabilities sum to {sum}")));
        }
        Ok(SparseDistribution { probs })
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.probs.get(&token).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.probs.iter().map(|(&t, &p)| (t, p))
    }

    pub fn sum(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Most probable token; ties go to the smallest id.
    pub fn argmax(&self) -> Option<(TokenId, f64)> {
        let mut best: Option<(TokenId, f64)> = None;
        for (t, p) in self.iter() {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((t, p));
            }
        }
        best
    }

    /// The `k` most probable tokens, ordered by probability then id.
    pub fn top_k(&self, k: usize) -> Vec<TokenId> {
        let mut v: Vec<(TokenId, f64)> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter().take(k).map(|(t, _)| t).collect()
    }
}

/// Children of every matching suffix of `prefix`, shortest suffix first.
///
/// Lookups stop at the first unmatched suffix: if `s` is absent, no longer
/// suffix ending in `s` can have children either.
pub fn collect_candidates(trie: &PrefixTrie, prefix: &[TokenId]) -> Vec<RawCandidate> {
    let mut out = Vec::new();
    let longest = prefix.len().min(trie.n_max().saturating_sub(1));
    for suffix_len in 1..=longest {
        let suffix = &prefix[prefix.len() - suffix_len..];
        let matched =
            trie.for_each_next(suffix, |token, features| out.push(RawCandidate { token, features, suffix_len }));
        if !matched {
            break;
        }
    }
    out
}

pub fn score_candidates(
    raw: &[RawCandidate],
    prefix_len: usize,
    now: u64,
    weights: &ScoringWeights,
) -> Result<CandidateSet> {
    if raw.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if prefix_len == 0 {
        return Err(Error::EmptyInput);
    }
    let gap = |c: &RawCandidate| (now as i128 - c.features.recency as i128) as f64;
    let mut max_log_freq = f64::MIN;
    let mut min_gap = f64::INFINITY;
    let mut max_gap = f64::NEG_INFINITY;
    for c in raw {
        max_log_freq = max_log_freq.max((c.features.frequency as f64).ln_1p());
        let d = gap(c);
        min_gap = min_gap.min(d);
        max_gap = max_gap.max(d);
    }
    let gap_span = max_gap - min_gap;

    let mut set = CandidateSet::default();
    for c in raw {
        let frequency = (c.features.frequency as f64).ln_1p() / max_log_freq;
        let length = (c.features.depth as f64 / prefix_len as f64).min(1.0);
        let recency = if gap_span > 0.0 { (-(gap(c) - min_gap) / gap_span).exp() } else { 1.0 };
        let score = (weights.frequency * frequency + weights.length * length + weights.recency * recency).min(1.0);
        let scored = ScoredCandidate {
            score,
            normalized: NormalizedFeatures { frequency, length, recency },
            features: c.features,
            suffix_len: c.suffix_len,
        };
        match set.entries.get(&c.token) {
            Some(existing) if existing.score >= score => {}
            _ => {
                set.entries.insert(c.token, scored);
            }
        }
    }
    Ok(set)
}

/// Keeps the top score as its own probability and shares the remaining mass
/// among the other candidates in proportion to their scores. A lone
/// candidate gets all the mass.
pub fn top_preserving_distribution(cands: &CandidateSet) -> Result<SparseDistribution> {
    let (top, s_max) = cands.best().ok_or(Error::EmptyCandidates)?;
    let mut probs = BTreeMap::new();
    if cands.len() == 1 {
        probs.insert(top, 1.0);
        return Ok(SparseDistribution { probs });
    }
    let rest: f64 = cands.entries.iter().filter(|(&t, _)| t != top).map(|(_, c)| c.score).sum();
    probs.insert(top, s_max);
    for (&t, c) in &cands.entries {
        if t == top {
            continue;
        }
        let p = (1.0 - s_max) * c.score / rest;
        if p > 0.0 {
            probs.insert(t, p);
        }
    }
    Ok(SparseDistribution { probs })
}

/// Full prior for one decoding step, or `None` when the trie has nothing to
/// say about `prefix`.
pub fn trie_prior(
    trie: &PrefixTrie,
    prefix: &[TokenId],
    now: u64,
    weights: &ScoringWeights,
) -> Result<Option<(CandidateSet, SparseDistribution)>> {
    let raw = collect_candidates(trie, prefix);
    if raw.is_empty() {
        return Ok(None);
    }
    let cands = score_candidates(&raw, prefix.len(), now, weights)?;
    let dist = top_preserving_distribution(&cands)?;
    Ok(Some((cands, dist)))
}

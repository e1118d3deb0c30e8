//! Lexical generation metrics.
//!
//! * exact match on whitespace-normalized strings,
//! * edit similarity `1 - lev(ref, hyp) / max(|ref|, |hyp|)` over characters
//!   (higher is better),
//! * sentence BLEU: n ≤ 4, uniform weights, brevity penalty, add-one
//!   smoothing on orders n ≥ 2 (unigram precision is unsmoothed),
//! * ROUGE-L: LCS over whitespace tokens, F1,
//! * chrF: character n-grams n ≤ 6 with whitespace removed, β = 2, per-order
//!   F averaged over orders both strings can fill, scaled to 0..100.
//!
//! BLEU and ROUGE-L are reference-directed; edit similarity is symmetric.
//! `token_cosine` is a bag-of-words cosine, a purely lexical stand-in and not
//! an embedding similarity.

use std::collections::HashMap;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::normalize_whitespace;

pub const BLEU_MAX_ORDER: usize = 4;
pub const CHRF_MAX_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// One-line description of the metric parameterization, for report headers.
pub const METRIC_NOTES: &str = "BLEU n<=4 uniform, add-one smoothing for n>=2, brevity penalty; \
ROUGE-L token LCS F1; chrF char n<=6 beta=2 whitespace removed; ED = normalized edit similarity (higher is better); \
TokCos = bag-of-words cosine (lexical proxy, not embedding-based)";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub exact_match: f64,
    pub edit_similarity: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub chrf: f64,
    pub token_cosine: f64,
}

impl MetricBundle {
    pub const FIELDS: [&'static str; 6] = ["EM", "ED", "BLEU", "ROUGE-L", "ChrF", "TokCos"];

    pub fn values(&self) -> [f64; 6] {
        [self.exact_match, self.edit_similarity, self.bleu, self.rouge_l, self.chrf, self.token_cosine]
    }

    fn from_values(v: [f64; 6]) -> Self {
        MetricBundle {
            exact_match: v[0],
            edit_similarity: v[1],
            bleu: v[2],
            rouge_l: v[3],
            chrf: v[4],
            token_cosine: v[5],
        }
    }
}

pub fn evaluate_pair(reference: &str, hypothesis: &str) -> Result<MetricBundle> {
    let reference = normalize_whitespace(reference);
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let hypothesis = normalize_whitespace(hypothesis);
    let ref_tokens: Vec<&str> = reference.split(' ').collect();
    let hyp_tokens: Vec<&str> = hypothesis.split_whitespace().collect();
    Ok(MetricBundle {
        exact_match: if reference == hypothesis { 1.0 } else { 0.0 },
        edit_similarity: edit_similarity(&reference, &hypothesis),
        bleu: bleu(&ref_tokens, &hyp_tokens),
        rouge_l: rouge_l(&ref_tokens, &hyp_tokens),
        chrf: chrf(&reference, &hypothesis),
        token_cosine: token_cosine(&ref_tokens, &hyp_tokens),
    })
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

fn ngram_counts<T: Eq + Hash + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches<T: Eq + Hash + Clone>(hyp: &HashMap<&[T], usize>, reference: &HashMap<&[T], usize>) -> usize {
    hyp.iter().map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0))).sum()
}

pub fn bleu(reference: &[&str], hypothesis: &[&str]) -> f64 {
    if hypothesis.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let h = ngram_counts(hypothesis, n);
        let r = ngram_counts(reference, n);
        let matches = clipped_matches(&h, &r) as f64;
        let total = hypothesis.len().saturating_sub(n - 1) as f64;
        let p = if n == 1 { matches / total } else { (matches + 1.0) / (total + 1.0) };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln() / BLEU_MAX_ORDER as f64;
    }
    let (c, r) = (hypothesis.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l(reference: &[&str], hypothesis: &[&str]) -> f64 {
    let lcs = lcs_len(reference, hypothesis) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / hypothesis.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn chrf(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let beta2 = CHRF_BETA * CHRF_BETA;
    let mut total = 0.0;
    let mut orders = 0;
    for n in 1..=CHRF_MAX_ORDER {
        if r.len() < n || h.len() < n {
            continue;
        }
        orders += 1;
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        let m = clipped_matches(&hc, &rc) as f64;
        let p = m / (h.len() - n + 1) as f64;
        let rec = m / (r.len() - n + 1) as f64;
        if p + rec > 0.0 {
            total += (1.0 + beta2) * p * rec / (beta2 * p + rec);
        }
    }
    if orders == 0 {
        return 0.0;
    }
    100.0 * total / orders as f64
}

pub fn token_cosine(a: &[&str], b: &[&str]) -> f64 {
    let ca = ngram_counts(a, 1);
    let cb = ngram_counts(b, 1);
    let dot: u64 = ca.iter().map(|(g, &x)| (x * cb.get(g).copied().unwrap_or(0)) as u64).sum();
    let na: u64 = ca.values().map(|&x| (x * x) as u64).sum();
    let nb: u64 = cb.values().map(|&x| (x * x) as u64).sum();
    if na == 0 || nb == 0 {
        0.0
    } else {
        (dot as f64 / (na as f64 * nb as f64).sqrt()).min(1.0)
    }
}

pub fn aggregate(bundles: &[MetricBundle]) -> Result<MetricBundle> {
    if bundles.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut sum = [0.0; 6];
    for b in bundles {
        for (s, v) in sum.iter_mut().zip(b.values()) {
            *s += v;
        }
    }
    Ok(MetricBundle::from_values(sum.map(|s| s / bundles.len() as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub lower: MetricBundle,
    pub upper: MetricBundle,
}

/// Percentile bootstrap interval of the mean, per metric.
pub fn bootstrap_ci(bundles: &[MetricBundle], resamples: usize, level: f64, seed: u64) -> Result<ConfidenceIntervals> {
    if bundles.is_empty() {
        return Err(Error::EmptyList);
    }
    if resamples == 0 || !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidConfig("bootstrap needs resamples > 0 and level in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bundles.len();
    let mut means: Vec<[f64; 6]> = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = [0.0; 6];
        for _ in 0..n {
            let b = &bundles[rng.random_range(0..n)];
            for (s, v) in sum.iter_mut().zip(b.values()) {
                *s += v;
            }
        }
        means.push(sum.map(|s| s / n as f64));
    }
    let alpha = (1.0 - level) / 2.0;
    let lo_idx = ((alpha * resamples as f64).floor() as usize).min(resamples - 1);
    let hi_idx = (((1.0 - alpha) * resamples as f64).ceil() as usize).saturating_sub(1).min(resamples - 1);
    let mut lower = [0.0; 6];
    let mut upper = [0.0; 6];
    for f in 0..6 {
        let mut col: Vec<f64> = means.iter().map(|m| m[f]).collect();
        col.sort_by(f64::total_cmp);
        lower[f] = col[lo_idx];
        upper[f] = col[hi_idx];
    }
    Ok(ConfidenceIntervals { lower: MetricBundle::from_values(lower), upper: MetricBundle::from_values(upper) })
}

/// Tab-separated strategy × metric table with a commented header line.
pub fn results_table(rows: &[(String, MetricBundle)]) -> String {
    let mut out = format!("# {METRIC_NOTES}\nstrategy");
    for f in MetricBundle::FIELDS {
        out.push('\t');
        out.push_str(f);
    }
    out.push('\n');
    for (name, m) in rows {
        out.push_str(name);
        let v = m.values();
        for (i, x) in v.iter().enumerate() {
            // chrF lives on a 0..100 scale
            if i == 4 {
                out.push_str(&format!("\t{x:.3}"));
            } else {
                out.push_str(&format!("\t{x:.4}"));
            }
        }
        out.push('\n');
    }
    out
}

#![allow(dead_code)]

use std::collections::BTreeMap;

use odd_core::lm::LogitProvider;
use odd_core::{ScoringWeights, TokenId};
use rand::Rng;

/// Brute-force reference for the trie prior: keeps the raw inserted
/// sequences and rescans them for every query.
pub struct NgramScanner {
    n_max: usize,
    seqs: Vec<(Vec<u32>, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub frequency: u64,
    pub depth: u32,
    pub recency: u64,
}

impl NgramScanner {
    pub fn new(n_max: usize) -> Self {
        NgramScanner { n_max, seqs: Vec::new() }
    }

    pub fn insert(&mut self, seq: &[u32], ts: u64) {
        self.seqs.push((seq.to_vec(), ts));
    }

    /// Stored windows: every start except the last token of a multi-token
    /// sequence, each cut at `n_max` tokens.
    fn windows(&self) -> impl Iterator<Item = (&[u32], u64)> {
        self.seqs.iter().flat_map(move |(s, ts)| {
            let starts = if s.len() == 1 { 1 } else { s.len() - 1 };
            (0..starts).map(move |i| (&s[i..(i + self.n_max).min(s.len())], *ts))
        })
    }

    pub fn stat(&self, path: &[u32]) -> Option<Stat> {
        let mut found: Option<Stat> = None;
        for (w, ts) in self.windows() {
            if w.len() >= path.len() && &w[..path.len()] == path {
                let s = found.get_or_insert(Stat { frequency: 0, depth: path.len() as u32, recency: 0 });
                s.frequency += 1;
                s.recency = s.recency.max(ts);
            }
        }
        found
    }

    pub fn node_count(&self) -> usize {
        let mut paths = std::collections::BTreeSet::new();
        for (w, _) in self.windows() {
            for l in 1..=w.len() {
                paths.insert(w[..l].to_vec());
            }
        }
        paths.len()
    }

    /// (token, stat) for every suffix of `prefix` and every stored
    /// continuation, without any early exit.
    pub fn raw(&self, prefix: &[u32]) -> Vec<(u32, Stat)> {
        let mut next: BTreeMap<(usize, u32), ()> = BTreeMap::new();
        for s in 1..=prefix.len() {
            let suffix = &prefix[prefix.len() - s..];
            for (w, _) in self.windows() {
                if w.len() > s && &w[..s] == suffix {
                    next.insert((s, w[s]), ());
                }
            }
        }
        next.keys()
            .map(|&(s, y)| {
                let mut path = prefix[prefix.len() - s..].to_vec();
                path.push(y);
                (y, self.stat(&path).expect("continuation exists"))
            })
            .collect()
    }

    /// Token -> best score, straight from the scoring formulas.
    pub fn scores(&self, prefix: &[u32], now: u64, w: &ScoringWeights) -> BTreeMap<u32, f64> {
        let raw = self.raw(prefix);
        let mut out = BTreeMap::new();
        if raw.is_empty() {
            return out;
        }
        let fmax = raw.iter().map(|(_, s)| (1.0 + s.frequency as f64).ln()).fold(f64::MIN, f64::max);
        let deltas: Vec<f64> = raw.iter().map(|(_, s)| now as f64 - s.recency as f64).collect();
        let dmin = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
        let dmax = deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for ((y, s), d) in raw.iter().zip(&deltas) {
            let f = (1.0 + s.frequency as f64).ln() / fmax;
            let l = f64::min(1.0, s.depth as f64 / prefix.len() as f64);
            let r = if dmax > dmin { (-(d - dmin) / (dmax - dmin)).exp() } else { 1.0 };
            let score = w.frequency * f + w.length * l + w.recency * r;
            let e = out.entry(*y).or_insert(score);
            if score > *e {
                *e = score;
            }
        }
        out
    }

    pub fn prior(&self, prefix: &[u32], now: u64, w: &ScoringWeights) -> BTreeMap<u32, f64> {
        let scores = self.scores(prefix, now, w);
        let mut out = BTreeMap::new();
        let Some((&top, &smax)) = scores.iter().fold(None, |best: Option<(&u32, &f64)>, (t, s)| match best {
            Some((_, b)) if *b >= *s => best,
            _ => Some((t, s)),
        }) else {
            return out;
        };
        if scores.len() == 1 {
            out.insert(top, 1.0);
            return out;
        }
        let rest: f64 = scores.iter().filter(|(t, _)| **t != top).map(|(_, s)| s).sum();
        out.insert(top, smax);
        for (&t, &s) in &scores {
            if t != top && smax < 1.0 {
                out.insert(t, (1.0 - smax) * s / rest);
            }
        }
        out
    }
}

pub fn random_corpus(rng: &mut impl Rng, vocab: u32, max_seqs: usize) -> Vec<Vec<u32>> {
    let n = rng.random_range(1..=max_seqs);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=8);
            (0..len).map(|_| rng.random_range(0..vocab)).collect()
        })
        .collect()
}

pub fn ids(v: &[u32]) -> Vec<TokenId> {
    v.iter().map(|&t| TokenId(t)).collect()
}

/// Decodes by taking the largest logit at every step, lowest id on ties.
pub fn argmax_decode<P: LogitProvider + ?Sized>(
    provider: &mut P,
    prompt: &[TokenId],
    end: TokenId,
    max_new: usize,
) -> Vec<TokenId> {
    let mut prefix = prompt.to_vec();
    for _ in 0..max_new {
        let z = provider.logits(&prefix).unwrap();
        let mut best = 0;
        for (i, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = i;
            }
        }
        let tok = TokenId(best as u32);
        if tok == end {
            break;
        }
        prefix.push(tok);
    }
    prefix
}

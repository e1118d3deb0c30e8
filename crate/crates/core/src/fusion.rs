//! Confidence-weighted fusion of a base model with the trie prior.
//!
//! One decoding step:
//!
//! 1. `c_lm = 1 - H(softmax(z)) / ln|V|` on the untempered base distribution.
//! 2. `c_trie = S_max`, the prior's top probability.
//! 3. Solve for `T*` so that `max softmax(z / T*) = S_max` and temper the base
//!    distribution with it.
//! 4. Disagreement `Ω = min(1, sqrt(JSD))` over the union of both top-k sets,
//!    each side renormalized on that union.
//! 5. Continuity `Γ = 1 - exp(-r / 3)` where `r` counts consecutive steps on
//!    which both experts had the same top token.
//! 6. `c'_lm = c_lm (1 - Ω²)`, `c'_trie = c_trie + (1 - c_trie) c_trie² Γ`,
//!    `γ = c'_lm / (c'_lm + c'_trie)`.
//! 7. Pick `argmax γ q_lm + (1 - γ) q_trie`.
//!
//! When the trie has no candidates the step falls back to greedy decoding on
//! the raw logits. All logarithms are natural. Every argmax breaks ties
//! toward the smallest token id.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::SparseDistribution;
use crate::vocab::TokenId;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_CONTINUITY_SCALE: f64 = 3.0;

/// Probabilities over the whole vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDistribution(Vec<f64>);

impl DenseDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("probabilities sum to {sum}")));
        }
        Ok(DenseDistribution(probs))
    }

    pub fn uniform(vocab: usize) -> Self {
        DenseDistribution(vec![1.0 / vocab as f64; vocab])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.0.get(token.index()).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn argmax(&self) -> TokenId {
        argmax(&self.0)
    }

    pub fn top_k(&self, k: usize) -> Vec<TokenId> {
        top_k_indices(&self.0, k)
    }
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    TokenId(best as u32)
}

/// The `k` largest entries by value, then by ascending index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<TokenId> {
    let mut top: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for (i, &v) in values.iter().enumerate() {
        if top.len() == k && top.last().is_some_and(|&(_, w)| v <= w) {
            continue;
        }
        let pos = top.iter().position(|&(_, w)| v > w).unwrap_or(top.len());
        top.insert(pos, (i, v));
        top.truncate(k);
    }
    top.into_iter().map(|(i, _)| TokenId(i as u32)).collect()
}

fn check_logits(z: &[f64]) -> Result<()> {
    if z.len() < 2 {
        return Err(Error::InvalidLogits(format!("need at least 2 entries, got {}", z.len())));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidLogits(format!("entry {i} is not finite")));
    }
    Ok(())
}

pub fn softmax_with_temperature(z: &[f64], temperature: f64) -> Result<DenseDistribution> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    if z.is_empty() {
        return Err(Error::InvalidLogits("empty logit vector".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(DenseDistribution(out))
}

/// `1 - H(q) / ln|q|`, clamped to `[0, 1]`.
pub fn entropy_confidence(q: &DenseDistribution) -> f64 {
    let n = q.len();
    if n < 2 {
        return 1.0;
    }
    let h: f64 = q.0.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    (1.0 - h / (n as f64).ln()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationOutcome {
    Solved,
    /// Target at or above the sharpest attainable peak; smallest temperature returned.
    ClampedLow,
    /// Target at or below `1/|V|`; largest temperature returned.
    ClampedHigh,
    /// All logits equal, the peak does not depend on temperature; `T = 1`.
    ConstantLogits,
    /// Calibration not attempted (fixed temperature or bypass step).
    Skipped,
}

impl CalibrationOutcome {
    pub fn is_clamped(self) -> bool {
        !matches!(self, CalibrationOutcome::Solved | CalibrationOutcome::Skipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub temperature: f64,
    pub outcome: CalibrationOutcome,
    /// Peak evaluations spent, bracket expansion included.
    pub iterations: usize,
}

pub const CALIBRATION_BRACKET: (f64, f64) = (1e-3, 1e3);
pub const CALIBRATION_CAPS: (f64, f64) = (1e-12, 1e12);
pub const CALIBRATION_MAX_ITERATIONS: usize = 200;
const CALIBRATION_TOL: f64 = 1e-10;

/// `max softmax(z / T)` as a function of `T`, precomputed for repeated use.
struct PeakCurve {
    /// `z_i - max z`, sorted descending.
    gaps: Vec<f64>,
}

impl PeakCurve {
    fn new(z: &[f64]) -> Self {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut gaps: Vec<f64> = z.iter().map(|&v| v - max).collect();
        gaps.sort_unstable_by(|a, b| b.total_cmp(a));
        PeakCurve { gaps }
    }

    fn ties(&self) -> usize {
        self.gaps.iter().take_while(|&&g| g == 0.0).count()
    }

    fn peak(&self, t: f64) -> f64 {
        let mut sum = 0.0;
        for &g in &self.gaps {
            let x = g / t;
            // remaining terms are below e^-50 each
            if x < -50.0 {
                break;
            }
            sum += x.exp();
        }
        1.0 / sum
    }
}

/// Finds `T` with `max softmax(z / T) = target` by bisection on `ln T`.
///
/// Starts from [`CALIBRATION_BRACKET`], widening it tenfold per side until the
/// root is bracketed or [`CALIBRATION_CAPS`] is hit. Unattainable targets are
/// clamped and reported through [`CalibrationOutcome`].
pub fn calibrate_temperature(z: &[f64], target: f64) -> Result<Calibration> {
    check_logits(z)?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidConfig(format!("calibration target {target} is outside (0, 1]")));
    }
    let curve = PeakCurve::new(z);
    let vocab = z.len() as f64;
    let ties = curve.ties();
    let clamp = |temperature, outcome, iterations| Ok(Calibration { temperature, outcome, iterations });
    if ties == z.len() {
        return clamp(1.0, CalibrationOutcome::ConstantLogits, 0);
    }
    if target >= 1.0 / ties as f64 {
        return clamp(CALIBRATION_CAPS.0, CalibrationOutcome::ClampedLow, 0);
    }
    if target <= 1.0 / vocab {
        return clamp(CALIBRATION_CAPS.1, CalibrationOutcome::ClampedHigh, 0);
    }

    // peak(T) falls as T grows.
    let (mut lo, mut hi) = CALIBRATION_BRACKET;
    let mut iterations = 0;
    let mut f_lo = curve.peak(lo) - target;
    let mut f_hi = curve.peak(hi) - target;
    iterations += 2;
    while f_lo < 0.0 && lo > CALIBRATION_CAPS.0 && iterations < CALIBRATION_MAX_ITERATIONS {
        hi = lo;
        f_hi = f_lo;
        lo = (lo / 10.0).max(CALIBRATION_CAPS.0);
        f_lo = curve.peak(lo) - target;
        iterations += 1;
    }
    while f_hi > 0.0 && hi < CALIBRATION_CAPS.1 && iterations < CALIBRATION_MAX_ITERATIONS {
        lo = hi;
        f_lo = f_hi;
        hi = (hi * 10.0).min(CALIBRATION_CAPS.1);
        f_hi = curve.peak(hi) - target;
        iterations += 1;
    }
    if f_lo < 0.0 {
        return clamp(lo, CalibrationOutcome::ClampedLow, iterations);
    }
    if f_hi > 0.0 {
        return clamp(hi, CalibrationOutcome::ClampedHigh, iterations);
    }

    let mut best = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    while best.1.abs() > CALIBRATION_TOL && iterations < CALIBRATION_MAX_ITERATIONS {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        let f_mid = curve.peak(mid) - target;
        iterations += 1;
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration { temperature: best.0, outcome: CalibrationOutcome::Solved, iterations })
}

/// Jensen-Shannon divergence in nats; inputs must be distributions over the
/// same support.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let term = |x: f64| if x > 0.0 { x * (x / m).ln() } else { 0.0 };
        total += term(a) + term(b);
    }
    (0.5 * total).max(0.0)
}

fn omega_on_union(union: &mut Vec<TokenId>, a: impl Fn(TokenId) -> f64, b: impl Fn(TokenId) -> f64) -> f64 {
    union.sort_unstable();
    union.dedup();
    let pa: Vec<f64> = union.iter().map(|&t| a(t)).collect();
    let pb: Vec<f64> = union.iter().map(|&t| b(t)).collect();
    let (sa, sb): (f64, f64) = (pa.iter().sum(), pb.iter().sum());
    if !(sa > 0.0 && sb > 0.0) {
        return 1.0;
    }
    let pa: Vec<f64> = pa.iter().map(|x| x / sa).collect();
    let pb: Vec<f64> = pb.iter().map(|x| x / sb).collect();
    jensen_shannon(&pa, &pb).sqrt().min(1.0)
}

/// Top-k disagreement between the tempered base distribution and the prior.
/// Returns 1 when either side has no mass on the union set.
pub fn disagreement(q_lm: &DenseDistribution, prior: &SparseDistribution, k: usize) -> f64 {
    let mut union = q_lm.top_k(k);
    union.extend(prior.top_k(k));
    omega_on_union(&mut union, |t| q_lm.get(t), |t| prior.get(t))
}

/// Same measure between two dense distributions; symmetric in its arguments.
pub fn disagreement_dense(a: &DenseDistribution, b: &DenseDistribution, k: usize) -> f64 {
    let mut union = a.top_k(k);
    union.extend(b.top_k(k));
    omega_on_union(&mut union, |t| a.get(t), |t| b.get(t))
}

/// `1 - exp(-run_length / scale)`.
pub fn continuity(run_length: u32, scale: f64) -> f64 {
    1.0 - (-(run_length as f64) / scale).exp()
}

/// Penalizes the base model by disagreement and rewards the trie by
/// continuity.
pub fn adjust_confidences(c_lm: f64, c_trie: f64, omega: f64, gamma_cont: f64) -> (f64, f64) {
    let lm = c_lm * (1.0 - omega * omega);
    let trie = c_trie + (1.0 - c_trie) * c_trie * c_trie * gamma_cont;
    (lm.clamp(0.0, c_lm), trie.clamp(c_trie, 1.0))
}

/// Relative confidence of the base model; 0.5 when neither side has any.
pub fn interpolation_weight(c_lm: f64, c_trie: f64) -> f64 {
    let total = c_lm + c_trie;
    if total > 0.0 {
        (c_lm / total).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Odd,
    Greedy,
    TempScaled,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Greedy, Strategy::TempScaled, Strategy::Odd];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Odd => "odd",
            Strategy::Greedy => "greedy",
            Strategy::TempScaled => "temp-scaled",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odd" => Ok(Strategy::Odd),
            "greedy" => Ok(Strategy::Greedy),
            "temp-scaled" | "temp_scaled" => Ok(Strategy::TempScaled),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemperatureMode {
    /// Match the base model's peak to the prior's peak every step.
    Adaptive,
    Fixed(f64),
}

/// Knobs of the fusion engine. The decoding strategies are presets of this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Consult the trie prior at all; without it every step is greedy on `z`.
    pub use_prior: bool,
    pub temperature: TemperatureMode,
    pub top_k: usize,
    pub continuity_scale: f64,
    pub use_disagreement: bool,
    pub use_continuity: bool,
    /// Fixed interpolation weight in place of the confidence ratio.
    pub lm_weight: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig::preset(Strategy::Odd)
    }
}

pub const DEFAULT_TEMP_SCALED_TEMPERATURE: f64 = 0.7;

impl FusionConfig {
    pub fn preset(strategy: Strategy) -> Self {
        let odd = FusionConfig {
            use_prior: true,
            temperature: TemperatureMode::Adaptive,
            top_k: DEFAULT_TOP_K,
            continuity_scale: DEFAULT_CONTINUITY_SCALE,
            use_disagreement: true,
            use_continuity: true,
            lm_weight: None,
        };
        match strategy {
            Strategy::Odd => odd,
            Strategy::Greedy => {
                FusionConfig { use_prior: false, temperature: TemperatureMode::Fixed(1.0), lm_weight: Some(1.0), ..odd }
            }
            Strategy::TempScaled => FusionConfig {
                use_prior: false,
                temperature: TemperatureMode::Fixed(DEFAULT_TEMP_SCALED_TEMPERATURE),
                lm_weight: Some(1.0),
                ..odd
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if !(self.continuity_scale > 0.0 && self.continuity_scale.is_finite()) {
            return Err(Error::InvalidConfig("continuity_scale must be positive".into()));
        }
        if let TemperatureMode::Fixed(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::NonPositiveTemperature(t));
            }
        }
        if let Some(w) = self.lm_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidConfig(format!("lm_weight {w} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-sequence state: consecutive top-token agreement count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionState {
    pub run_length: u32,
}

impl FusionState {
    pub fn reset(&mut self) {
        self.run_length = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub token: TokenId,
    pub bypass: bool,
    pub candidates: usize,
    pub c_lm: f64,
    pub c_trie: f64,
    pub c_lm_adjusted: f64,
    pub c_trie_adjusted: f64,
    /// Ω
    pub disagreement: f64,
    /// Γ
    pub continuity: f64,
    /// γ
    pub lm_weight: f64,
    pub temperature: f64,
    pub calibration: CalibrationOutcome,
    /// Agreement run length going into this step.
    pub run_length: u32,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub token: TokenId,
    pub diagnostics: StepDiagnostics,
    /// Fused distribution, absent on bypass steps.
    pub fused: Option<DenseDistribution>,
    /// Tempered base distribution, absent on bypass steps.
    pub base: Option<DenseDistribution>,
}

/// One decoding step. `prior` is `None` when the trie produced no candidates.
pub fn fuse_step(
    z: &[f64],
    prior: Option<&SparseDistribution>,
    state: &mut FusionState,
    config: &FusionConfig,
) -> Result<StepOutcome> {
    check_logits(z)?;
    let run_length = state.run_length;
    let prior = prior.filter(|p| config.use_prior && !p.is_empty());

    let Some(prior) = prior else {
        let token = argmax(z);
        let temperature = match config.temperature {
            TemperatureMode::Fixed(t) => t,
            TemperatureMode::Adaptive => 1.0,
        };
        state.reset();
        let c_lm = entropy_confidence(&softmax_with_temperature(z, 1.0)?);
        return Ok(StepOutcome {
            token,
            diagnostics: StepDiagnostics {
                token,
                bypass: true,
                candidates: 0,
                c_lm,
                c_trie: 0.0,
                c_lm_adjusted: c_lm,
                c_trie_adjusted: 0.0,
                disagreement: 0.0,
                continuity: 0.0,
                lm_weight: 1.0,
                temperature,
                calibration: CalibrationOutcome::Skipped,
                run_length,
            },
            fused: None,
            base: None,
        });
    };

    if let Some((t, _)) = prior.iter().find(|(t, _)| t.index() >= z.len()) {
        return Err(Error::TokenOutOfRange { id: t.0, vocab: z.len() });
    }

    let c_lm = entropy_confidence(&softmax_with_temperature(z, 1.0)?);
    let (trie_top, s_max) = prior.argmax().expect("prior is non-empty");
    let c_trie = s_max;

    let calibration = match config.temperature {
        TemperatureMode::Adaptive => calibrate_temperature(z, s_max)?,
        TemperatureMode::Fixed(t) => {
            Calibration { temperature: t, outcome: CalibrationOutcome::Skipped, iterations: 0 }
        }
    };
    let q_lm = softmax_with_temperature(z, calibration.temperature)?;

    let omega = if config.use_disagreement { disagreement(&q_lm, prior, config.top_k) } else { 0.0 };
    let gamma_cont = if config.use_continuity { continuity(run_length, config.continuity_scale) } else { 0.0 };
    let (c_lm_adj, c_trie_adj) = adjust_confidences(c_lm, c_trie, omega, gamma_cont);
    let weight = config.lm_weight.unwrap_or_else(|| interpolation_weight(c_lm_adj, c_trie_adj));

    let mut fused: Vec<f64> = q_lm.as_slice().iter().map(|p| weight * p).collect();
    for (t, p) in prior.iter() {
        fused[t.index()] += (1.0 - weight) * p;
    }
    let token = argmax(&fused);

    if argmax(z) == trie_top {
        state.run_length = state.run_length.saturating_add(1);
    } else {
        state.reset();
    }

    Ok(StepOutcome {
        token,
        diagnostics: StepDiagnostics {
            token,
            bypass: false,
            candidates: prior.len(),
            c_lm,
            c_trie,
            c_lm_adjusted: c_lm_adj,
            c_trie_adjusted: c_trie_adj,
            disagreement: omega,
            continuity: gamma_cont,
            lm_weight: weight,
            temperature: calibration.temperature,
            calibration: calibration.outcome,
            run_length,
        },
        fused: Some(DenseDistribution(fused)),
        base: Some(q_lm),
    })
}

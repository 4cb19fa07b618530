//! Training-time augmentation: additive Gaussian noise and span masking.
//!
//! Span lengths follow a geometric distribution truncated to `[1, l_max]`
//! (renormalized, not rejection-sampled). Spans are placed at uniform random
//! starts until the masked fraction of positions reaches `mask_ratio`; each
//! span either zeroes its positions or replaces them with standard-normal
//! draws. A masked position hides the full channel vector at that time step.
//!
//! Time and frequency representations get independent mask plans, and every
//! random choice comes from its own named stream (see [`crate::rng`]), so a
//! fixed per-sample seed reproduces the augmentation bit for bit.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::align::AlignedSample;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub mu: f64,
    pub sigma: f64,
    /// Apply noise during pretraining.
    pub enabled_pretrain: bool,
    /// Apply noise during fine-tuning.
    pub enabled_finetune: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { mu: 0.0, sigma: 0.1, enabled_pretrain: true, enabled_finetune: false }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::validation(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpanMaskConfig {
    /// Geometric distribution parameter; lower values skew toward `l_max`.
    pub p: f64,
    /// Maximum span length.
    pub l_max: usize,
    /// Probability that a span zeroes its positions.
    pub p_m: f64,
    /// Probability that a span replaces its positions with random values.
    pub p_r: f64,
    /// Target fraction of masked positions per sequence.
    pub mask_ratio: f64,
}

impl Default for SpanMaskConfig {
    fn default() -> Self {
        Self { p: 0.2, l_max: 10, p_m: 0.8, p_r: 0.2, mask_ratio: 0.15 }
    }
}

impl SpanMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::validation(format!("span p must be in (0,1), got {}", self.p)));
        }
        if self.l_max < 1 {
            return Err(Error::validation("l_max must be >= 1"));
        }
        if (self.p_m + self.p_r - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "p_m + p_r must be 1, got {} + {}",
                self.p_m, self.p_r
            )));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::validation(format!(
                "mask_ratio must be in (0,1), got {}",
                self.mask_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanAction {
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    /// Length after clipping at the sequence end.
    pub len: usize,
    pub action: SpanAction,
}

/// The sampled spans and the set of positions they cover.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskPlan {
    pub spans: Vec<Span>,
    /// Sorted, deduplicated masked positions.
    pub masked: Vec<usize>,
}

impl MaskPlan {
    pub fn masked_count(&self) -> usize {
        self.masked.len()
    }
}

/// Draw a span length from the geometric distribution truncated to
/// `[1, l_max]`: `P(l = k) = p (1-p)^(k-1) / (1 - (1-p)^l_max)`.
pub fn sample_span_length(rng: &mut impl Rng, cfg: &SpanMaskConfig) -> usize {
    let q = 1.0 - cfg.p;
    let normalizer = 1.0 - q.powi(cfg.l_max as i32);
    let u: f64 = rng.random::<f64>() * normalizer;
    let mut cdf = 0.0;
    let mut pk = cfg.p; // P(l = 1)
    for k in 1..cfg.l_max {
        cdf += pk;
        if u < cdf {
            return k;
        }
        pk *= q;
    }
    cfg.l_max
}

/// Sample spans until the masked fraction reaches `cfg.mask_ratio`.
///
/// Per span the draw order is: start (uniform over `[0, len)`), length
/// (truncated geometric, clipped at the sequence end), action
/// (`Zero` with probability `p_m`). Overlapping spans count positions once.
pub fn build_mask_plan(rng: &mut impl Rng, cfg: &SpanMaskConfig, len: usize) -> MaskPlan {
    assert!(len >= 1, "build_mask_plan: empty sequence");
    let target = cfg.mask_ratio * len as f64;
    let mut covered = vec![false; len];
    let mut count = 0usize;
    let mut spans = Vec::new();
    while (count as f64) < target {
        let start = rng.random_range(0..len);
        let drawn = sample_span_length(rng, cfg);
        let end = (start + drawn).min(len);
        let action =
            if rng.random::<f64>() < cfg.p_m { SpanAction::Zero } else { SpanAction::Random };
        spans.push(Span { start, len: end - start, action });
        for slot in covered.iter_mut().take(end).skip(start) {
            if !*slot {
                *slot = true;
                count += 1;
            }
        }
    }
    let masked = covered
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| if m { Some(i) } else { None })
        .collect();
    MaskPlan { spans, masked }
}

/// Add i.i.d. Gaussian noise to every element. `enabled = false` is a
/// pass-through.
pub fn add_noise(
    repr: &Array2<f64>,
    rng: &mut impl Rng,
    cfg: &NoiseConfig,
    enabled: bool,
) -> Array2<f64> {
    if !enabled {
        return repr.clone();
    }
    let normal = Normal::new(cfg.mu, cfg.sigma).expect("validated sigma");
    repr.mapv(|v| v + normal.sample(rng))
}

/// Apply a mask plan: positions in `Zero` spans have their whole channel
/// vector set to 0, positions in `Random` spans are replaced element-wise by
/// standard-normal draws. Later spans overwrite earlier ones.
pub fn apply_mask(repr: &Array2<f64>, plan: &MaskPlan, rng: &mut impl Rng) -> Array2<f64> {
    let (len, channels) = repr.dim();
    let mut out = repr.clone();
    for span in &plan.spans {
        debug_assert!(span.start + span.len <= len, "span out of bounds");
        for t in span.start..span.start + span.len {
            for c in 0..channels {
                out[(t, c)] = match span.action {
                    SpanAction::Zero => 0.0,
                    SpanAction::Random => StandardNormal.sample(rng),
                };
            }
        }
    }
    out
}

/// Which values the reconstruction targets hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Clean pooled values: the model denoises and unmasks jointly.
    Clean,
    /// Noised pre-mask values: the model only unmasks.
    Noised,
}

/// A model input after augmentation, with its reconstruction targets and the
/// mask plans that produced it.
#[derive(Debug, Clone)]
pub struct MaskedPair {
    pub input_time: Array2<f64>,
    pub input_freq: Array2<f64>,
    pub target_time: Array2<f64>,
    pub target_freq: Array2<f64>,
    pub q_time: MaskPlan,
    pub q_freq: MaskPlan,
    pub label: Option<u32>,
    pub dataset_id: String,
}

/// The per-sample augmentation pipeline: noise, then masking, in both
/// domains, with independent mask plans.
#[derive(Debug, Clone, Copy)]
pub struct Augmenter {
    pub noise: NoiseConfig,
    pub mask: SpanMaskConfig,
    /// Resolved from the noise config's per-mode flags by the caller.
    pub noise_enabled: bool,
    pub targets: TargetKind,
}

impl Augmenter {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.mask.validate()
    }

    /// Augment one aligned sample. All randomness derives from `seed`.
    pub fn augment(&self, sample: &AlignedSample, seed: u64) -> MaskedPair {
        let noised_time = add_noise(
            &sample.time_repr,
            &mut stream(seed, Stream::NoiseTime),
            &self.noise,
            self.noise_enabled,
        );
        let noised_freq = add_noise(
            &sample.freq_repr,
            &mut stream(seed, Stream::NoiseFreq),
            &self.noise,
            self.noise_enabled,
        );
        let len = sample.time_repr.nrows();
        let q_time = build_mask_plan(&mut stream(seed, Stream::MaskTime), &self.mask, len);
        let q_freq = build_mask_plan(&mut stream(seed, Stream::MaskFreq), &self.mask, len);
        let input_time = apply_mask(&noised_time, &q_time, &mut stream(seed, Stream::ReplaceTime));
        let input_freq = apply_mask(&noised_freq, &q_freq, &mut stream(seed, Stream::ReplaceFreq));
        let (target_time, target_freq) = match self.targets {
            TargetKind::Clean => (sample.time_repr.clone(), sample.freq_repr.clone()),
            TargetKind::Noised => (noised_time, noised_freq),
        };
        MaskedPair {
            input_time,
            input_freq,
            target_time,
            target_freq,
            q_time,
            q_freq,
            label: sample.label,
            dataset_id: sample.dataset_id.clone(),
        }
    }
}

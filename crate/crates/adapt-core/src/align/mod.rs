//! Alignment of variable-shape samples to one fixed dual representation.
//!
//! Every sample, whatever its length and channel count, is mapped to two
//! `(l_out, c_out)` matrices: its adaptively pooled time values and its
//! adaptively pooled magnitude spectrum. Pooling kernels are computed
//! dynamically from the input/output sizes, so the same operation
//! downsamples, upsamples (by replication), or passes through unchanged.

mod spectral;

pub use spectral::magnitude_spectrum;

use ndarray::Array2;

use crate::data::RawSample;
use crate::error::{Error, Result};

/// Kernel bounds for output index `i` when pooling `n` inputs to `m` outputs.
///
/// Computed in exact integer arithmetic: `start = floor(i*n/m)` and
/// `end = ceil((i+1)*n/m)`, so `0 <= start < end <= n` for every valid `i`.
pub fn kernel_bounds(i: usize, m: usize, n: usize) -> (usize, usize) {
    debug_assert!(m >= 1 && n >= 1 && i < m, "kernel_bounds({i}, {m}, {n})");
    let start = i * n / m;
    let end = ((i + 1) * n + m - 1) / m;
    (start, end)
}

/// The kernel layout for pooling `input_len` values down (or up) to
/// `output_len`. Mostly useful for auditing; the pooling ops compute bounds
/// on the fly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub input_len: usize,
    pub output_len: usize,
}

impl PoolSpec {
    pub fn new(input_len: usize, output_len: usize) -> Result<Self> {
        if input_len == 0 || output_len == 0 {
            return Err(Error::validation(format!(
                "pool sizes must be positive, got {input_len} -> {output_len}"
            )));
        }
        Ok(Self { input_len, output_len })
    }

    /// `(index, start, end)` for every output position.
    pub fn kernels(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.output_len).map(move |i| {
            let (s, e) = kernel_bounds(i, self.output_len, self.input_len);
            (i, s, e)
        })
    }
}

/// Average-pool a vector of length `n` to length `m`; each output is the
/// mean of its kernel window.
pub fn adaptive_pool_1d(values: &[f64], m: usize) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 1 && m >= 1, "adaptive_pool_1d: empty input or output");
    (0..m)
        .map(|i| {
            let (s, e) = kernel_bounds(i, m, n);
            values[s..e].iter().sum::<f64>() / (e - s) as f64
        })
        .collect()
}

/// Average-pool a matrix to `(m_h, m_w)`; each output is the mean of a
/// rectangular kernel whose bounds are computed independently per axis.
pub fn adaptive_pool_2d(values: &Array2<f64>, m_h: usize, m_w: usize) -> Array2<f64> {
    let (n_h, n_w) = values.dim();
    assert!(
        n_h >= 1 && n_w >= 1 && m_h >= 1 && m_w >= 1,
        "adaptive_pool_2d: empty input or output"
    );
    let mut out = Array2::zeros((m_h, m_w));
    for h in 0..m_h {
        let (hs, he) = kernel_bounds(h, m_h, n_h);
        for w in 0..m_w {
            let (ws, we) = kernel_bounds(w, m_w, n_w);
            let mut acc = 0.0;
            for r in hs..he {
                for c in ws..we {
                    acc += values[(r, c)];
                }
            }
            out[(h, w)] = acc / ((he - hs) * (we - ws)) as f64;
        }
    }
    out
}

/// A sample after alignment: fixed-shape time and frequency representations.
#[derive(Debug, Clone)]
pub struct AlignedSample {
    /// Pooled time values, shape `(l_out, c_out)`.
    pub time_repr: Array2<f64>,
    /// Pooled magnitude spectrum, shape `(l_out, c_out)`.
    pub freq_repr: Array2<f64>,
    pub label: Option<u32>,
    pub dataset_id: String,
}

/// How samples are brought to the target shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Adaptive average pooling on both axes (the supported path).
    Pool,
    /// Baseline for comparison runs: truncate/zero-pad the first channel to
    /// `l_out` and keep a single channel. Requires `c_out = 1`.
    Truncate,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignOptions {
    pub l_out: usize,
    pub c_out: usize,
    pub mode: AlignMode,
    /// Re-apply per-channel z-scoring to the pooled spectrum. Off by default:
    /// noise and masking operate on the raw magnitudes.
    pub normalize_spectrum: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { l_out: 256, c_out: 32, mode: AlignMode::Pool, normalize_spectrum: false }
    }
}

impl AlignOptions {
    pub fn validate(&self) -> Result<()> {
        if self.l_out == 0 || self.c_out == 0 {
            return Err(Error::validation("align: l_out and c_out must be positive"));
        }
        if self.mode == AlignMode::Truncate && self.c_out != 1 {
            return Err(Error::validation(
                "align: truncate mode unifies channels, so c_out must be 1",
            ));
        }
        Ok(())
    }
}

/// Align one (already normalized) sample to the target shape.
pub fn align_sample(sample: &RawSample, opts: &AlignOptions) -> Result<AlignedSample> {
    opts.validate()?;
    let (time_repr, freq_repr) = match opts.mode {
        AlignMode::Pool => {
            let time = adaptive_pool_2d(&sample.values, opts.l_out, opts.c_out);
            let spectrum = magnitude_spectrum(&sample.values);
            let freq = adaptive_pool_2d(&spectrum, opts.l_out, opts.c_out);
            (time, freq)
        }
        AlignMode::Truncate => {
            let time = truncate_first_channel(&sample.values, opts.l_out);
            let spectrum = magnitude_spectrum(&time);
            let freq = pad_rows(&spectrum, opts.l_out);
            (time, freq)
        }
    };
    let freq_repr = if opts.normalize_spectrum { zscore_columns(&freq_repr) } else { freq_repr };
    Ok(AlignedSample {
        time_repr,
        freq_repr,
        label: sample.label,
        dataset_id: sample.dataset_id.clone(),
    })
}

/// Pack an aligned sample into the raw binary layout: the time channels
/// followed by the frequency channels, `(l_out, 2 * c_out)` in total.
pub fn pack_aligned(aligned: &AlignedSample) -> RawSample {
    let (l, c) = aligned.time_repr.dim();
    let mut values = Array2::zeros((l, 2 * c));
    for t in 0..l {
        for ch in 0..c {
            values[(t, ch)] = aligned.time_repr[(t, ch)];
            values[(t, c + ch)] = aligned.freq_repr[(t, ch)];
        }
    }
    RawSample { values, label: aligned.label, dataset_id: aligned.dataset_id.clone() }
}

fn truncate_first_channel(values: &Array2<f64>, l_out: usize) -> Array2<f64> {
    let (len, _) = values.dim();
    let mut out = Array2::zeros((l_out, 1));
    for t in 0..len.min(l_out) {
        out[(t, 0)] = values[(t, 0)];
    }
    out
}

fn pad_rows(values: &Array2<f64>, rows: usize) -> Array2<f64> {
    let (len, ch) = values.dim();
    let mut out = Array2::zeros((rows, ch));
    for t in 0..len.min(rows) {
        for c in 0..ch {
            out[(t, c)] = values[(t, c)];
        }
    }
    out
}

fn zscore_columns(values: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = values.dim();
    let mut out = values.clone();
    for c in 0..cols {
        let col = values.column(c);
        let mean = col.sum() / rows as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
        let denom = var.sqrt() + 1e-8;
        for r in 0..rows {
            out[(r, c)] = (values[(r, c)] - mean) / denom;
        }
    }
    out
}

//! Ingestion of heterogeneous time-series datasets.
//!
//! Samples arrive in the binary format of [`format`], described by a TOML
//! [`manifest`]. Each sample is an arbitrary `(length, channels)` matrix with
//! an optional class label. Ingestion validates shapes and labels and applies
//! per-channel z-scoring.

pub mod format;
pub mod manifest;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use format::{read_samples, write_samples};
pub use manifest::{DatasetManifest, ManifestEntry, Split};

use crate::error::{Error, Result};

/// One variable-shape time series: `(length, channels)` values, optional
/// class label, and the id of the dataset it came from.
#[derive(Debug, Clone)]
pub struct RawSample {
    pub values: Array2<f64>,
    pub label: Option<u32>,
    pub dataset_id: String,
}

/// Scope of the z-scoring statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    /// Statistics computed per channel within each sample (the default;
    /// samples have heterogeneous lengths, so this needs no cross-sample
    /// bookkeeping).
    PerSample,
    /// Statistics computed per channel across all samples of a dataset
    /// split. Requires a uniform channel count within the dataset.
    PerDataset,
}

/// Load one dataset file and validate it against its manifest entry.
///
/// Returns exactly the number of samples the file header declares. Labels
/// are checked against the declared class count.
pub fn load_dataset(path: &std::path::Path, entry: &ManifestEntry) -> Result<Vec<RawSample>> {
    let samples = format::read_samples(path, &entry.id)?;
    for (idx, sample) in samples.iter().enumerate() {
        match (sample.label, entry.classes) {
            (Some(label), Some(classes)) if label >= classes => {
                return Err(Error::validation(format!(
                    "dataset {}: sample {idx} has label {label} >= declared class count {classes}",
                    entry.id
                )));
            }
            (Some(label), None) => {
                return Err(Error::validation(format!(
                    "dataset {}: sample {idx} has label {label} but the manifest declares no classes",
                    entry.id
                )));
            }
            _ => {}
        }
    }
    Ok(samples)
}

/// Z-score each channel of a sample: subtract the channel mean, divide by the
/// population standard deviation. Constant channels map to all zeros (the
/// divisor carries a 1e-8 guard).
pub fn normalize_per_channel(sample: &RawSample) -> RawSample {
    let (len, channels) = sample.values.dim();
    let mut values = Array2::zeros((len, channels));
    for c in 0..channels {
        let col = sample.values.column(c);
        let mean = col.sum() / len as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
        let denom = var.sqrt() + 1e-8;
        for t in 0..len {
            values[(t, c)] = (sample.values[(t, c)] - mean) / denom;
        }
    }
    RawSample { values, label: sample.label, dataset_id: sample.dataset_id.clone() }
}

/// Z-score every channel across all samples of one dataset with shared
/// statistics. All samples must have the same channel count.
pub fn normalize_per_dataset(samples: &[RawSample]) -> Result<Vec<RawSample>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let channels = first.values.ncols();
    for (idx, s) in samples.iter().enumerate() {
        if s.values.ncols() != channels {
            return Err(Error::validation(format!(
                "dataset {}: per-dataset normalization needs a uniform channel count, \
                 sample {idx} has {} channels, expected {channels}",
                s.dataset_id,
                s.values.ncols()
            )));
        }
    }
    let mut mean = vec![0.0f64; channels];
    let mut count = 0usize;
    for s in samples {
        for row in s.values.rows() {
            for (c, v) in row.iter().enumerate() {
                mean[c] += v;
            }
        }
        count += s.values.nrows();
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0f64; channels];
    for s in samples {
        for row in s.values.rows() {
            for (c, v) in row.iter().enumerate() {
                let d = v - mean[c];
                var[c] += d * d;
            }
        }
    }
    let denom: Vec<f64> = var.iter().map(|v| (v / count as f64).sqrt() + 1e-8).collect();
    Ok(samples
        .iter()
        .map(|s| {
            let mut values = s.values.clone();
            for mut row in values.rows_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean[c]) / denom[c];
                }
            }
            RawSample { values, label: s.label, dataset_id: s.dataset_id.clone() }
        })
        .collect())
}

/// Load + validate + normalize one dataset split entry.
pub fn ingest(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    scope: NormalizationScope,
) -> Result<Vec<RawSample>> {
    let path = manifest.resolve_path(entry);
    let samples = load_dataset(&path, entry)?;
    match scope {
        NormalizationScope::PerSample => Ok(samples.iter().map(normalize_per_channel).collect()),
        NormalizationScope::PerDataset => normalize_per_dataset(&samples),
    }
}

/// Parse one CSV file into a sample: one row per time step, one column per
/// channel, `#`-prefixed comment lines skipped. A comment of the form
/// `# label = 3` (or `# label: 3`) attaches a class label.
pub fn parse_csv_sample(text: &str, dataset_id: &str) -> Result<RawSample> {
    let mut label = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("label") {
                let rest = rest.trim_start_matches([':', '=', ' ']).trim();
                let parsed: u32 = rest.parse().map_err(|_| {
                    Error::format(format!("line {}: bad label comment {comment:?}", lineno + 1))
                })?;
                label = Some(parsed);
            }
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::format(format!("line {}: bad value {:?}", lineno + 1, field.trim()))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::format(format!(
                    "line {}: {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "line {}: non-finite value in column {c}",
                    lineno + 1
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::validation("csv sample has no data rows"));
    }
    let channels = rows[0].len();
    let mut values = Array2::zeros((rows.len(), channels));
    for (t, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            values[(t, c)] = *v;
        }
    }
    Ok(RawSample { values, label, dataset_id: dataset_id.to_string() })
}

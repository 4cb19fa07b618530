//! Classification metrics, multi-seed aggregation, embedding export, and the
//! dataset-property correlation utility.

use std::io::Write;
use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::align::AlignedSample;
use crate::batch::stack_clean;
use crate::data::RawSample;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u32,
    /// True instances of this class.
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub accuracy: f64,
    /// Macro averages over classes present in labels or predictions.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Confusion-matrix metrics with macro averaging. Classes absent from both
/// predictions and labels are excluded from the macro means; a class with no
/// predicted (or no true) positives scores 0 on the undefined metric.
pub fn compute_metrics(
    predictions: &[u32],
    labels: &[u32],
    n_classes: usize,
) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::validation("metrics: empty input"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::validation(format!(
            "metrics: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&pred, &label) in predictions.iter().zip(labels) {
        if pred as usize >= n_classes || label as usize >= n_classes {
            return Err(Error::validation(format!(
                "metrics: class out of range (pred {pred}, label {label}, n_classes {n_classes})"
            )));
        }
        confusion[label as usize][pred as usize] += 1;
    }

    let total = predictions.len();
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let mut per_class = Vec::new();
    for c in 0..n_classes {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
        if support == 0 && predicted == 0 {
            continue;
        }
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let recall = if support > 0 { tp as f64 / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics { class: c as u32, support, precision, recall, f1 });
    }
    let k = per_class.len() as f64;
    Ok(MetricsReport {
        n_samples: total,
        accuracy: correct as f64 / total as f64,
        precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|c| c.f1).sum::<f64>() / k,
        per_class,
    })
}

/// Mean and population standard deviation of one metric across seeds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, sd: var.sqrt() }
    }
}

impl std::fmt::Display for MeanSd {
    /// Subscript-style reporting: `93.6±2.9` (percent).
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1}\u{b1}{:.1}", self.mean * 100.0, self.sd * 100.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_seeds: usize,
    pub accuracy: MeanSd,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
}

impl AggregateReport {
    pub fn formatted(&self) -> String {
        format!(
            "accuracy {} precision {} recall {} f1 {}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }
}

/// Per-metric mean and population standard deviation over repeated runs.
pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::validation("aggregate: no reports"));
    }
    let pick = |f: fn(&MetricsReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    Ok(AggregateReport {
        n_seeds: reports.len(),
        accuracy: MeanSd::of(&pick(|r| r.accuracy)),
        precision: MeanSd::of(&pick(|r| r.precision)),
        recall: MeanSd::of(&pick(|r| r.recall)),
        f1: MeanSd::of(&pick(|r| r.f1)),
    })
}

/// Pearson correlation coefficient; `None` when either side has zero
/// variance (undefined).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// One dataset's fine-tuned accuracy next to its physical properties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetProperties {
    pub dataset_id: String,
    pub accuracy: f64,
    pub length: f64,
    pub channels: f64,
    pub classes: f64,
    pub train_test_ratio: f64,
}

/// Pearson correlation of accuracy against each dataset property, including
/// the derived total dimensional size (length x channels). `None` entries
/// mark zero-variance properties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyCorrelations {
    pub length: Option<f64>,
    pub channels: Option<f64>,
    pub classes: Option<f64>,
    pub train_test_ratio: Option<f64>,
    pub total_dimensional_size: Option<f64>,
}

pub fn property_correlation(rows: &[DatasetProperties]) -> PropertyCorrelations {
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let against = |f: fn(&DatasetProperties) -> f64| -> Option<f64> {
        let xs: Vec<f64> = rows.iter().map(f).collect();
        pearson(&xs, &acc)
    };
    PropertyCorrelations {
        length: against(|r| r.length),
        channels: against(|r| r.channels),
        classes: against(|r| r.classes),
        train_test_ratio: against(|r| r.train_test_ratio),
        total_dimensional_size: against(|r| r.length * r.channels),
    }
}

fn write_csv_row(w: &mut impl Write, values: impl Iterator<Item = f64>, label: i64) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            write!(w, ",")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    writeln!(w, ",{label}")?;
    Ok(())
}

fn write_csv_header(w: &mut impl Write, cols: usize) -> Result<()> {
    for i in 0..cols {
        write!(w, "f{i},")?;
    }
    writeln!(w, "label")?;
    Ok(())
}

fn label_of(label: Option<u32>) -> i64 {
    label.map(|l| l as i64).unwrap_or(-1)
}

/// Flattened raw values, one row per sample. All samples must share one
/// shape; the error names the first offender.
pub fn export_raw(samples: &[RawSample], out: &Path) -> Result<()> {
    let Some(first) = samples.first() else {
        return Err(Error::validation("export: no samples"));
    };
    let dim = first.values.dim();
    for (idx, s) in samples.iter().enumerate() {
        if s.values.dim() != dim {
            return Err(Error::validation(format!(
                "export raw: sample {idx} of dataset {} has shape {:?}, expected {:?}; \
                 raw export requires a fixed-shape dataset",
                s.dataset_id,
                s.values.dim(),
                dim
            )));
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_csv_header(&mut w, dim.0 * dim.1)?;
    for s in samples {
        write_csv_row(&mut w, s.values.iter().copied(), label_of(s.label))?;
    }
    Ok(())
}

/// Flattened aligned representations: time then frequency, one row per
/// sample (`2 * l_out * c_out` feature columns plus the label).
pub fn export_pooled(samples: &[AlignedSample], out: &Path) -> Result<()> {
    let Some(first) = samples.first() else {
        return Err(Error::validation("export: no samples"));
    };
    let (l, c) = first.time_repr.dim();
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_csv_header(&mut w, 2 * l * c)?;
    for s in samples {
        let values = s.time_repr.iter().copied().chain(s.freq_repr.iter().copied());
        write_csv_row(&mut w, values, label_of(s.label))?;
    }
    Ok(())
}

/// Mean-pooled encoder output embeddings (`d_model` columns plus the label).
pub fn export_encoded(
    model: &Model,
    samples: &[AlignedSample],
    batch_size: usize,
    out: &Path,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::validation("export: no samples"));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_csv_header(&mut w, model.config.d_model)?;
    let refs: Vec<&AlignedSample> = samples.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let batch = stack_clean(chunk);
        let e_i = model.embed(&batch.input_time, &batch.input_freq);
        let e_o = model.encode(&e_i);
        let pooled = e_o.mean_axis(Axis(1)).expect("non-empty sequence");
        for (row, sample) in pooled.rows().into_iter().zip(chunk.iter()) {
            write_csv_row(&mut w, row.iter().copied(), label_of(sample.label))?;
        }
    }
    Ok(())
}

//! Training objectives: masked dual-domain reconstruction and cross-entropy.

use ndarray::{Array2, Array3};

use super::Encoding;

#[derive(Debug, Clone)]
pub struct ReconLoss {
    pub loss: f64,
    pub d_pred_time: Array3<f64>,
    pub d_pred_freq: Array3<f64>,
}

/// Mean squared error over masked positions only, each domain normalized by
/// its own masked count (or by the time count when `shared_n`), summed across
/// domains and averaged over the batch.
///
/// A masked position contributes all of its features; unmasked positions
/// contribute nothing, so their loss gradient is exactly zero. Every item
/// must have at least one masked position in each scored domain.
pub fn masked_recon_loss(
    pred_time: &Array3<f64>,
    pred_freq: &Array3<f64>,
    target_time: &Array3<f64>,
    target_freq: &Array3<f64>,
    q_time: &[Vec<usize>],
    q_freq: &[Vec<usize>],
    encoding: Encoding,
    shared_n: bool,
) -> ReconLoss {
    let (b, l, c) = pred_time.dim();
    assert_eq!(pred_time.dim(), target_time.dim(), "recon loss: time shape mismatch");
    assert_eq!(pred_freq.dim(), target_freq.dim(), "recon loss: freq shape mismatch");
    assert_eq!(q_time.len(), b, "recon loss: q_time batch mismatch");
    assert_eq!(q_freq.len(), b, "recon loss: q_freq batch mismatch");

    let mut loss = 0.0;
    let mut d_pred_time = Array3::zeros((b, l, c));
    let mut d_pred_freq = Array3::zeros((b, l, c));

    for i in 0..b {
        if encoding.uses_time() {
            assert!(!q_time[i].is_empty(), "recon loss: item {i} has an empty time mask set");
            let denom = (q_time[i].len() * c) as f64;
            for &pos in &q_time[i] {
                debug_assert!(pos < l);
                for ch in 0..c {
                    let diff = pred_time[(i, pos, ch)] - target_time[(i, pos, ch)];
                    loss += diff * diff / denom;
                    d_pred_time[(i, pos, ch)] = 2.0 * diff / (denom * b as f64);
                }
            }
        }
        if encoding.uses_freq() {
            assert!(!q_freq[i].is_empty(), "recon loss: item {i} has an empty freq mask set");
            let n = if shared_n {
                assert!(!q_time[i].is_empty(), "recon loss: shared_n needs a time mask set");
                q_time[i].len()
            } else {
                q_freq[i].len()
            };
            let denom = (n * c) as f64;
            for &pos in &q_freq[i] {
                debug_assert!(pos < l);
                for ch in 0..c {
                    let diff = pred_freq[(i, pos, ch)] - target_freq[(i, pos, ch)];
                    loss += diff * diff / denom;
                    d_pred_freq[(i, pos, ch)] = 2.0 * diff / (denom * b as f64);
                }
            }
        }
    }

    ReconLoss { loss: loss / b as f64, d_pred_time, d_pred_freq }
}

#[derive(Debug, Clone)]
pub struct CeLoss {
    pub loss: f64,
    pub d_logits: Array2<f64>,
}

/// Mean cross-entropy over the batch with a stable log-softmax;
/// `d_logits = (softmax - onehot) / batch`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[u32]) -> CeLoss {
    let (b, k) = logits.dim();
    assert_eq!(labels.len(), b, "cross entropy: label count mismatch");
    let mut loss = 0.0;
    let mut d_logits = Array2::zeros((b, k));
    for i in 0..b {
        let label = labels[i] as usize;
        assert!(label < k, "cross entropy: label {label} out of range for {k} classes");
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_z - logits[(i, label)];
        for j in 0..k {
            let p = (logits[(i, j)] - log_z).exp();
            d_logits[(i, j)] = (p - if j == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    CeLoss { loss: loss / b as f64, d_logits }
}

/// Row-wise softmax of logits (prediction probabilities).
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    super::layers::softmax_rows_inplace(&mut out);
    out
}

/// Arg-max predictions per row.
pub fn predictions(logits: &Array2<f64>) -> Vec<u32> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

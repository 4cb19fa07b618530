//! Decoupled-weight-decay Adam and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// One bias-corrected moment update on a flat tensor. Weight decay is
/// decoupled: it scales the parameter directly and never enters the moments,
/// so `weight_decay = 0` reduces to plain Adam.
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &AdamWConfig,
) {
    debug_assert!(t >= 1);
    debug_assert_eq!(param.len(), grad.len());
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * param[i]);
    }
}

/// Per-tensor first/second moment buffers, allocated only for trainable
/// tensors.
#[derive(Debug, Clone)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// AdamW over a model's tensor list. `trainable` is aligned with the
/// parameter visitation order; frozen tensors get no state and no updates.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub t: u64,
    pub slots: Vec<Option<Moments>>,
}

impl AdamW {
    pub fn new(params: &ModelParams, cfg: AdamWConfig, trainable: &[bool]) -> Self {
        let tensors = params.visit();
        assert_eq!(tensors.len(), trainable.len(), "trainable mask length mismatch");
        let slots = tensors
            .iter()
            .zip(trainable)
            .map(|((_, t), &on)| {
                on.then(|| {
                    let len = t.as_slice().len();
                    Moments { m: vec![0.0; len], v: vec![0.0; len] }
                })
            })
            .collect();
        Self { cfg, t: 0, slots }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let grad_tensors = grads.visit();
        let mut param_tensors = params.visit_mut();
        assert_eq!(param_tensors.len(), self.slots.len(), "optimizer/model tensor mismatch");
        for ((slot, (_, param)), (_, grad)) in
            self.slots.iter_mut().zip(param_tensors.iter_mut()).zip(grad_tensors.iter())
        {
            if let Some(moments) = slot {
                adamw_update(
                    param.as_slice_mut(),
                    grad.as_slice(),
                    &mut moments.m,
                    &mut moments.v,
                    self.t,
                    lr,
                    &self.cfg,
                );
            }
        }
    }
}

/// Scale all gradients by `max_norm / norm` when the global L2 norm exceeds
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_slices(slices: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = slices
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for s in slices.iter_mut() {
            for v in s.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Clip a full gradient set by global L2 norm. Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let mut tensors = grads.visit_mut();
    let mut slices: Vec<&mut [f64]> = tensors.iter_mut().map(|(_, t)| t.as_slice_mut()).collect();
    clip_slices(&mut slices, max_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut p = [1.0f64];
        let mut m = [0.0f64];
        let mut v = [0.0f64];
        adamw_update(&mut p, &[1.0], &mut m, &mut v, 1, 0.1, &cfg);
        // Bias correction makes m_hat = 1, v_hat = 1 on step one, so the
        // update is lr / (1 + eps).
        assert_abs_diff_eq!(p[0], 1.0 - 0.1 / (1.0 + cfg.eps), epsilon = 1e-12);
        assert!((p[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_params_unchanged() {
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut p = [0.5f64, -2.0];
        let mut m = [0.0f64; 2];
        let mut v = [0.0f64; 2];
        for t in 1..=5 {
            adamw_update(&mut p, &[0.0, 0.0], &mut m, &mut v, t, 0.1, &cfg);
        }
        assert_eq!(p, [0.5, -2.0]);
    }

    #[test]
    fn zero_decay_matches_plain_adam() {
        // Hand-rolled plain Adam trace over three steps.
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let grads = [0.3f64, -0.7, 0.1];
        let mut p = [1.0f64];
        let mut m = [0.0f64];
        let mut v = [0.0f64];
        let mut p_ref = 1.0f64;
        let mut m_ref = 0.0f64;
        let mut v_ref = 0.0f64;
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as u64;
            adamw_update(&mut p, &[*g], &mut m, &mut v, t, 0.05, &cfg);
            m_ref = 0.9 * m_ref + 0.1 * g;
            v_ref = 0.999 * v_ref + 0.001 * g * g;
            let mh = m_ref / (1.0 - 0.9f64.powi(t as i32));
            let vh = v_ref / (1.0 - 0.999f64.powi(t as i32));
            p_ref -= 0.05 * mh / (vh.sqrt() + cfg.eps);
            assert_abs_diff_eq!(p[0], p_ref, epsilon = 1e-14);
        }
    }

    #[test]
    fn decay_shrinks_weights_independently_of_gradient() {
        let cfg = AdamWConfig { weight_decay: 0.1, ..Default::default() };
        let mut p = [2.0f64];
        let mut m = [0.0f64];
        let mut v = [0.0f64];
        adamw_update(&mut p, &[0.0], &mut m, &mut v, 1, 0.5, &cfg);
        // Gradient is zero, so the whole update is -lr * wd * p.
        assert_abs_diff_eq!(p[0], 2.0 - 0.5 * 0.1 * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut a = [0.3f64, 0.4];
        let mut slices: Vec<&mut [f64]> = vec![&mut a];
        let norm = clip_slices(&mut slices, 1.0);
        assert_abs_diff_eq!(norm, 0.5, epsilon = 1e-12);
        assert_eq!(a, [0.3, 0.4]);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut a = [6.0f64];
        let mut b = [8.0f64];
        let mut slices: Vec<&mut [f64]> = vec![&mut a, &mut b];
        let norm = clip_slices(&mut slices, 1.0);
        assert_abs_diff_eq!(norm, 10.0, epsilon = 1e-12);
        let post = (a[0] * a[0] + b[0] * b[0]).sqrt();
        assert_abs_diff_eq!(post, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn clip_preserves_direction() {
        let mut a = [3.0f64, -4.0, 12.0];
        let before = a;
        let mut slices: Vec<&mut [f64]> = vec![&mut a];
        clip_slices(&mut slices, 1.0);
        let dot: f64 = a.iter().zip(&before).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = before.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_abs_diff_eq!(dot / (na * nb), 1.0, epsilon = 1e-12);
    }
}

//! Layer primitives with explicit forward caches and analytic backward
//! passes. Everything computes in f64; gradients are exact derivatives of
//! the forward expressions.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

pub const LN_EPS: f64 = 1e-5;

/// Affine map `y = x W + b` acting row-wise on `(n, in_dim)` inputs.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { w: Array2::zeros((in_dim, out_dim)), b: Array1::zeros(out_dim) }
    }

    pub fn xavier(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((in_dim, out_dim), |_| rng.random_range(-limit..limit)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.in_dim(), "linear: input dim mismatch");
        x.dot(&self.w) + &self.b
    }

    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> (Array2<f64>, LinearGrad) {
        assert_eq!(dy.ncols(), self.out_dim(), "linear: grad dim mismatch");
        let dx = dy.dot(&self.w.t());
        let dw = x.t().dot(dy);
        let db = dy.sum_axis(Axis(0));
        (dx, LinearGrad { dw, db })
    }
}

/// Layer normalization over the feature axis with learned scale and offset.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LnCache {
    /// Normalized inputs `(x - mu) / sqrt(var + eps)`, shape of `x`.
    pub xhat: Array2<f64>,
    /// Per-row `1 / sqrt(var + eps)`.
    pub inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn identity(dim: usize) -> Self {
        Self { gamma: Array1::ones(dim), beta: Array1::zeros(dim) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let (rows, d) = x.dim();
        assert_eq!(d, self.gamma.len(), "layer norm: dim mismatch");
        let mut xhat = Array2::zeros((rows, d));
        let mut inv_std = Array1::zeros(rows);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..d {
                xhat[(r, c)] = (x[(r, c)] - mean) * inv;
            }
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        cache: &LnCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let (rows, d) = dy.dim();
        let dgamma = (dy * &cache.xhat).sum_axis(Axis(0));
        let dbeta = dy.sum_axis(Axis(0));
        let g = dy * &self.gamma;
        let mut dx = Array2::zeros((rows, d));
        for r in 0..rows {
            let grow = g.row(r);
            let xrow = cache.xhat.row(r);
            let m1 = grow.sum() / d as f64;
            let m2 = grow.iter().zip(xrow.iter()).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let inv = cache.inv_std[r];
            for c in 0..d {
                dx[(r, c)] = inv * (g[(r, c)] - m1 - cache.xhat[(r, c)] * m2);
            }
        }
        (dx, dgamma, dbeta)
    }
}

const GELU_S: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// Tanh-form GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_S * (x + GELU_C * x * x * x)).tanh())
}

/// Derivative of [`gelu`].
pub fn gelu_prime(x: f64) -> f64 {
    let inner = GELU_S * (x + GELU_C * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_S * (1.0 + 3.0 * GELU_C * x * x)
}

/// Row-wise numerically stable softmax, in place.
pub fn softmax_rows_inplace(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward through a row-wise softmax: `ds = a * (da - rowsum(da * a))`.
pub fn softmax_rows_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = a.dim();
    let mut ds = Array2::zeros((rows, cols));
    for r in 0..rows {
        let dot: f64 = a.row(r).iter().zip(da.row(r).iter()).map(|(x, y)| x * y).sum();
        for c in 0..cols {
            ds[(r, c)] = a[(r, c)] * (da[(r, c)] - dot);
        }
    }
    ds
}

/// Fixed sinusoidal positional encoding, shape `(seq_len, d_model)`.
pub fn sinusoidal_encoding(seq_len: usize, d_model: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((seq_len, d_model));
    for pos in 0..seq_len {
        let mut i = 0;
        while i < d_model {
            let freq = 1.0 / 10000f64.powf(i as f64 / d_model as f64);
            pe[(pos, i)] = (pos as f64 * freq).sin();
            if i + 1 < d_model {
                pe[(pos, i + 1)] = (pos as f64 * freq).cos();
            }
            i += 2;
        }
    }
    pe
}

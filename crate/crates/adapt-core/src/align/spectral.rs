//! One-sided magnitude spectrum of real multichannel signals.
//!
//! Each channel is transformed independently: `|DFT(x)|_k / n` for
//! `k = 0 ..= n/2`. Power-of-two lengths go through an iterative radix-2
//! FFT; other lengths fall back to the direct O(n^2) transform, which is
//! plenty at the sample sizes this pipeline targets.

use ndarray::Array2;

/// Complex value as `(re, im)`.
type C = (f64, f64);

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// In-place iterative radix-2 FFT. `buf.len()` must be a power of two.
fn fft_radix2(buf: &mut [C]) {
    let n = buf.len();
    debug_assert!(is_power_of_two(n));
    if n <= 1 {
        return;
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            buf.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let angle = -2.0 * std::f64::consts::PI / len as f64;
        let (w_re, w_im) = (angle.cos(), angle.sin());
        for chunk in buf.chunks_mut(len) {
            let (mut cur_re, mut cur_im) = (1.0, 0.0);
            let half = len / 2;
            for k in 0..half {
                let (a_re, a_im) = chunk[k];
                let (b_re, b_im) = chunk[k + half];
                let t_re = b_re * cur_re - b_im * cur_im;
                let t_im = b_re * cur_im + b_im * cur_re;
                chunk[k] = (a_re + t_re, a_im + t_im);
                chunk[k + half] = (a_re - t_re, a_im - t_im);
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
        }
        len <<= 1;
    }
}

/// Direct DFT of a real signal, returning the full complex spectrum.
fn dft_direct(signal: &[f64]) -> Vec<C> {
    let n = signal.len();
    let mut out = vec![(0.0, 0.0); n];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, &x) in signal.iter().enumerate() {
            let angle = -2.0 * std::f64::consts::PI * (k as f64) * (t as f64) / n as f64;
            re += x * angle.cos();
            im += x * angle.sin();
        }
        *slot = (re, im);
    }
    out
}

fn spectrum_one_channel(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let full: Vec<C> = if is_power_of_two(n) {
        let mut buf: Vec<C> = signal.iter().map(|&x| (x, 0.0)).collect();
        fft_radix2(&mut buf);
        buf
    } else {
        dft_direct(signal)
    };
    let scale = 1.0 / n as f64;
    (0..=n / 2)
        .map(|k| {
            let (re, im) = full[k];
            (re * re + im * im).sqrt() * scale
        })
        .collect()
}

/// One-sided magnitude spectrum per channel. Input shape `(len, channels)`,
/// output shape `(len/2 + 1, channels)`.
pub fn magnitude_spectrum(values: &Array2<f64>) -> Array2<f64> {
    let (len, channels) = values.dim();
    assert!(len >= 1 && channels >= 1, "magnitude_spectrum: empty input");
    let spec_len = len / 2 + 1;
    let mut out = Array2::zeros((spec_len, channels));
    for c in 0..channels {
        let signal: Vec<f64> = values.column(c).iter().copied().collect();
        let mag = spectrum_one_channel(&signal);
        for (k, v) in mag.into_iter().enumerate() {
            out[(k, c)] = v;
        }
    }
    out
}

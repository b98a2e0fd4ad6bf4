//! Multichannel Ambisonic time series and the FFT plumbing shared by the
//! rest of the crate.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sh::channel_count;

/// Real `(L+1)²`-channel signal in ACN order, N3D normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbisonicSignal {
    pub order: usize,
    pub sample_rate: f64,
    pub channels: Vec<Vec<f64>>,
}

impl AmbisonicSignal {
    pub fn new(order: usize, sample_rate: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.len() != channel_count(order) {
            return invalid(format!(
                "order {order} needs {} channels, got {}",
                channel_count(order),
                channels.len()
            ));
        }
        if !(sample_rate > 0.0) {
            return invalid("sample rate must be positive");
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return invalid("channels have unequal lengths");
        }
        Ok(Self {
            order,
            sample_rate,
            channels,
        })
    }

    pub fn zeros(order: usize, sample_rate: f64, len: usize) -> Self {
        Self {
            order,
            sample_rate,
            channels: vec![vec![0.0; len]; channel_count(order)],
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multichannel sample at time index `n`.
    pub fn frame(&self, n: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[n]).collect()
    }

    /// Keeps the first `(order+1)²` channels. Exact for SH-domain signals.
    pub fn truncate_order(&self, order: usize) -> Result<Self> {
        if order > self.order {
            return invalid(format!("cannot raise order {} to {order}", self.order));
        }
        Ok(Self {
            order,
            sample_rate: self.sample_rate,
            channels: self.channels[..channel_count(order)].to_vec(),
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.channels {
            c.iter_mut().for_each(|x| *x *= alpha);
        }
        out
    }
}

/// Complex FFT plans of a fixed size, used for real transforms.
#[derive(Clone)]
pub struct RealFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft").field("n", &self.n).finish()
    }
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// One-sided spectrum (`n/2 + 1` bins) of a real sequence, zero-padded or
    /// truncated to `n`.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n / 2 + 1);
        buf
    }

    /// Full complex spectrum of a real sequence.
    pub fn forward_full(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse of a one-sided spectrum. DC and Nyquist bins contribute their
    /// real parts only. Returns the real sequence and the largest imaginary
    /// residue of the inverse transform.
    pub fn inverse_with_residue(&self, half: &[Complex64]) -> (Vec<f64>, f64) {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, v) in half.iter().enumerate().take(n / 2 + 1) {
            buf[k] = *v;
        }
        buf[0].im = 0.0;
        if n % 2 == 0 && half.len() > n / 2 {
            buf[n / 2].im = 0.0;
        }
        for k in 1..n.div_ceil(2) {
            buf[n - k] = buf[k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        let residue = buf.iter().map(|c| (c.im * scale).abs()).fold(0.0, f64::max);
        (buf.iter().map(|c| c.re * scale).collect(), residue)
    }

    pub fn inverse(&self, half: &[Complex64]) -> Vec<f64> {
        self.inverse_with_residue(half).0
    }

    /// Inverse of a full complex spectrum, real part.
    pub fn inverse_full(&self, full: &[Complex64]) -> Vec<f64> {
        let mut buf = full.to_vec();
        buf.resize(self.n, Complex64::new(0.0, 0.0));
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Full linear convolution of two real sequences.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (k, &y) in b.iter().enumerate() {
                out[i + k] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let fft = RealFft::new(n);
    let fa = fft.forward_full(a);
    let fb = fft.forward_full(b);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = fft.inverse_full(&prod);
    out.truncate(out_len);
    out
}

/// Convolves a mono excitation with every channel of `filter`.
pub fn convolve_channels(excitation: &[f64], filter: &AmbisonicSignal) -> AmbisonicSignal {
    use rayon::prelude::*;
    let channels = filter
        .channels
        .par_iter()
        .map(|h| convolve(excitation, h))
        .collect();
    AmbisonicSignal {
        order: filter.order,
        sample_rate: filter.sample_rate,
        channels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_convolution_matches_direct() {
        let a: Vec<f64> = (0..100).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let b: Vec<f64> = (0..57).map(|i| ((i * 5) % 11) as f64 * 0.1).collect();
        let fast = convolve(&a, &b);
        let mut slow = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for k in 0..b.len() {
                slow[i + k] += a[i] * b[k];
            }
        }
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn real_inverse_of_hermitian_input_has_no_residue() {
        let fft = RealFft::new(64);
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let spec = fft.forward(&x);
        let (back, residue) = fft.inverse_with_residue(&spec);
        assert!(residue < 1e-10);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_channel_count() {
        assert!(AmbisonicSignal::new(1, 16000.0, vec![vec![0.0; 4]; 3]).is_err());
    }
}

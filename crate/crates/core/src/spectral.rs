//! STFT analysis/synthesis and instantaneous cross-periodograms.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{AmbisonicSignal, RealFft};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Tukey { taper: f64 },
}

impl Default for WindowKind {
    fn default() -> Self {
        WindowKind::Tukey { taper: 0.25 }
    }
}

/// Periodic window of length `n`.
pub fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 / nf;
            match kind {
                WindowKind::Rectangular => 1.0,
                WindowKind::Hann => 0.5 * (1.0 - (2.0 * PI * x).cos()),
                WindowKind::Tukey { taper } => {
                    if taper <= 0.0 {
                        1.0
                    } else if x < taper / 2.0 {
                        0.5 * (1.0 - (2.0 * PI * x / taper).cos())
                    } else if x > 1.0 - taper / 2.0 {
                        0.5 * (1.0 - (2.0 * PI * (1.0 - x) / taper).cos())
                    } else {
                        1.0
                    }
                }
            }
        })
        .collect()
}

/// One-sided STFT of every channel. Frame `t` is centred on sample
/// `t * hop`; the signal is zero-padded by half a window on both sides.
#[derive(Debug, Clone)]
pub struct StftTensor {
    /// channels × frames × bins, row-major.
    bins: Vec<Complex64>,
    pub channels: usize,
    pub frames: usize,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: f64,
    pub window_kind: WindowKind,
    pub signal_len: usize,
}

impl StftTensor {
    pub fn freq_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    #[inline]
    fn index(&self, ch: usize, frame: usize, bin: usize) -> usize {
        (ch * self.frames + frame) * self.freq_bins() + bin
    }

    #[inline]
    pub fn get(&self, ch: usize, frame: usize, bin: usize) -> Complex64 {
        self.bins[self.index(ch, frame, bin)]
    }

    pub fn set(&mut self, ch: usize, frame: usize, bin: usize, v: Complex64) {
        let i = self.index(ch, frame, bin);
        self.bins[i] = v;
    }

    pub fn frame_spectrum(&self, ch: usize, frame: usize) -> &[Complex64] {
        let start = self.index(ch, frame, 0);
        &self.bins[start..start + self.freq_bins()]
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate / self.window_len as f64
    }

    /// An all-zero tensor with the given layout.
    pub fn zeros(
        channels: usize,
        frames: usize,
        window_len: usize,
        hop: usize,
        sample_rate: f64,
        window_kind: WindowKind,
        signal_len: usize,
    ) -> Self {
        Self {
            bins: vec![Complex64::new(0.0, 0.0); channels * frames * (window_len / 2 + 1)],
            channels,
            frames,
            window_len,
            hop,
            sample_rate,
            window_kind,
            signal_len,
        }
    }
}

/// Hop size for a window length and overlap fraction.
pub fn hop_for(window_len: usize, overlap: f64) -> usize {
    ((window_len as f64 * (1.0 - overlap)).round() as usize).max(1)
}

pub fn stft(
    x: &AmbisonicSignal,
    window_len: usize,
    overlap: f64,
    window_kind: WindowKind,
) -> Result<StftTensor> {
    if window_len < 2 || window_len % 2 != 0 {
        return invalid(format!("window length {window_len} must be even"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return invalid(format!("overlap {overlap} outside [0, 1)"));
    }
    if x.len() < window_len {
        return Err(Error::SignalTooShort {
            len: x.len(),
            window: window_len,
        });
    }
    let hop = hop_for(window_len, overlap);
    let frames = x.len().div_ceil(hop) + 1;
    let win = window(window_kind, window_len);
    let fft = RealFft::new(window_len);
    let half = window_len / 2;
    let mut out = StftTensor::zeros(
        x.num_channels(),
        frames,
        window_len,
        hop,
        x.sample_rate,
        window_kind,
        x.len(),
    );
    let nb = out.freq_bins();
    let mut frame = vec![0.0; window_len];
    for (ch, samples) in x.channels.iter().enumerate() {
        for t in 0..frames {
            let start = (t * hop) as isize - half as isize;
            for (k, v) in frame.iter_mut().enumerate() {
                let n = start + k as isize;
                *v = if n >= 0 && (n as usize) < samples.len() {
                    samples[n as usize] * win[k]
                } else {
                    0.0
                };
            }
            let spec = fft.forward(&frame);
            let base = out.index(ch, t, 0);
            out.bins[base..base + nb].copy_from_slice(&spec);
        }
    }
    Ok(out)
}

/// Overlap-add resynthesis normalized by the summed analysis window.
///
/// Fails when the summed window drops below 1e-3 of its peak anywhere inside
/// the original signal span.
pub fn istft(t: &StftTensor) -> Result<AmbisonicSignal> {
    let j = t.window_len;
    let half = j / 2;
    let win = window(t.window_kind, j);
    let fft = RealFft::new(j);
    let mut wsum = vec![0.0; t.signal_len];
    for frame in 0..t.frames {
        let start = (frame * t.hop) as isize - half as isize;
        for (k, w) in win.iter().enumerate() {
            let n = start + k as isize;
            if n >= 0 && (n as usize) < t.signal_len {
                wsum[n as usize] += w;
            }
        }
    }
    let peak = wsum.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 || wsum.iter().any(|&w| w < 1e-3 * peak) {
        return Err(Error::NotCola);
    }
    let mut channels = vec![vec![0.0; t.signal_len]; t.channels];
    for (ch, out) in channels.iter_mut().enumerate() {
        for frame in 0..t.frames {
            let seg = fft.inverse(t.frame_spectrum(ch, frame));
            let start = (frame * t.hop) as isize - half as isize;
            for (k, v) in seg.iter().enumerate() {
                let n = start + k as isize;
                if n >= 0 && (n as usize) < t.signal_len {
                    out[n as usize] += v;
                }
            }
        }
        for (v, w) in out.iter_mut().zip(&wsum) {
            *v /= w;
        }
    }
    let order = crate::sh::order_from_channels(t.channels)
        .ok_or_else(|| Error::Format(format!("{} channels is not an SH layout", t.channels)))?;
    AmbisonicSignal::new(order, t.sample_rate, channels)
}

/// Energy gate on channel 0: a frame is active when its energy exceeds
/// `threshold` times the median frame energy.
pub fn energy_vad(t: &StftTensor, threshold: f64) -> Vec<bool> {
    let energies: Vec<f64> = (0..t.frames)
        .map(|f| t.frame_spectrum(0, f).iter().map(|c| c.norm_sqr()).sum())
        .collect();
    let mut sorted = energies.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    energies
        .iter()
        .map(|&e| e > threshold * median && e > 0.0)
        .collect()
}

/// Instantaneous cross-periodograms φ_{l′,l}(f,t) = b_{l′}(f,t)·conj(b_l(f,t)).
///
/// Each (f,t) slice is rank one, so the tensor keeps the STFT coefficients and
/// forms entries on demand.
#[derive(Debug, Clone)]
pub struct CrossSpectra {
    pub stft: StftTensor,
    /// Per-frame activity flags from the energy gate.
    pub active: Vec<bool>,
}

impl CrossSpectra {
    pub fn channels(&self) -> usize {
        self.stft.channels
    }

    pub fn frames(&self) -> usize {
        self.stft.frames
    }

    pub fn freq_bins(&self) -> usize {
        self.stft.freq_bins()
    }

    #[inline]
    pub fn phi(&self, l1: usize, l2: usize, frame: usize, bin: usize) -> Complex64 {
        self.stft.get(l1, frame, bin) * self.stft.get(l2, frame, bin).conj()
    }

    /// Full channel × channel matrix at one (frame, bin), row-major.
    pub fn matrix(&self, frame: usize, bin: usize) -> Vec<Complex64> {
        let c = self.channels();
        let mut m = Vec::with_capacity(c * c);
        for l1 in 0..c {
            for l2 in 0..c {
                m.push(self.phi(l1, l2, frame, bin));
            }
        }
        m
    }

    /// Average of the instantaneous matrices over `frames` (a Welch estimate).
    pub fn averaged(&self, frames: &[usize], bin: usize) -> Vec<Complex64> {
        let c = self.channels();
        let mut acc = vec![Complex64::new(0.0, 0.0); c * c];
        for &f in frames {
            for (a, v) in acc.iter_mut().zip(self.matrix(f, bin)) {
                *a += v;
            }
        }
        let scale = 1.0 / frames.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    }

    /// Reference-form statistics for a real wideband beamformer `w`:
    /// the channel variance |b_l|² and the cross term Σ_{l′} w_{l′} φ_{l′,l}.
    #[inline]
    pub fn reference_terms(&self, w: &[f64], l: usize, frame: usize, bin: usize) -> (f64, Complex64) {
        let mut reference = Complex64::new(0.0, 0.0);
        for (l2, &wl) in w.iter().enumerate() {
            if wl != 0.0 {
                reference += self.stft.get(l2, frame, bin) * wl;
            }
        }
        let b = self.stft.get(l, frame, bin);
        (b.norm_sqr(), reference * b.conj())
    }
}

pub fn cross_periodograms(t: &StftTensor) -> CrossSpectra {
    cross_periodograms_gated(t, 1.0)
}

pub fn cross_periodograms_gated(t: &StftTensor, vad_threshold: f64) -> CrossSpectra {
    CrossSpectra {
        active: energy_vad(t, vad_threshold),
        stft: t.clone(),
    }
}

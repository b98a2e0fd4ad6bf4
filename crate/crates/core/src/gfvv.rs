//! Generalized velocity vectors: least-squares GFVV estimation, conversion
//! to the time domain (GTVV), iterative DoA refinement, and the analytic
//! references used to check them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axis::{CenteredMatrix, GtvvMatrix};
use crate::error::{invalid, Error, Result};
use crate::ism::IsmScene;
use crate::sh::{
    encode, max_directivity_beamformer, nearest_direction, omni_beamformer, Beamformer,
    Direction, DirectionGrid,
};
use crate::signal::RealFft;
use crate::spectral::{CrossSpectra, StftTensor};

/// Minimum number of active frames per least-squares buffer.
pub const MIN_ACTIVE_FRAMES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtvvOptions {
    /// Neighbourhood size T (even), in frames.
    pub buffer_frames: usize,
    /// Distance between successive buffer centres, in frames.
    pub stride_frames: usize,
    /// Bins below this frequency are interpolated over.
    pub min_freq_hz: f64,
    /// Bins above this fraction of Nyquist are interpolated over.
    pub max_freq_fraction: f64,
    /// Relative Tikhonov term added to the 2×2 normal equations.
    pub ridge: f64,
}

impl Default for GtvvOptions {
    fn default() -> Self {
        Self {
            buffer_frames: 16,
            stride_frames: 8,
            min_freq_hz: 50.0,
            max_freq_fraction: 0.9,
            ridge: 1e-10,
        }
    }
}

impl GtvvOptions {
    /// Buffer and stride given in seconds for an STFT hop.
    pub fn from_seconds(buffer_s: f64, stride_s: f64, hop: usize, sample_rate: f64) -> Self {
        let frames = |s: f64| (s * sample_rate / hop as f64).round() as usize;
        let mut buffer_frames = frames(buffer_s).max(2);
        if buffer_frames % 2 == 1 {
            buffer_frames += 1;
        }
        Self {
            buffer_frames,
            stride_frames: frames(stride_s).max(1),
            ..Self::default()
        }
    }

    fn band_valid(&self, bin: usize, bins: usize, sample_rate: f64) -> bool {
        let nyquist = sample_rate / 2.0;
        let f = bin as f64 * nyquist / (bins - 1) as f64;
        f >= self.min_freq_hz && f <= self.max_freq_fraction * nyquist
    }
}

/// GFVV estimate for one buffer. `v` and `sigma` are channel-major
/// (`channel * bins + bin`).
#[derive(Debug, Clone)]
pub struct GfvvSpectrum {
    pub v: Vec<Complex64>,
    pub sigma: Vec<Complex64>,
    pub valid: Vec<bool>,
    pub beamformer: Beamformer,
    pub frame_center: usize,
    pub channels: usize,
    pub bins: usize,
    pub sample_rate: f64,
}

impl GfvvSpectrum {
    pub fn value(&self, l: usize, bin: usize) -> Complex64 {
        self.v[l * self.bins + bin]
    }

    pub fn column(&self, bin: usize) -> Vec<Complex64> {
        (0..self.channels).map(|l| self.value(l, bin)).collect()
    }

    /// wᵀv(:,f).
    pub fn reference_response(&self, bin: usize) -> Complex64 {
        self.beamformer
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| self.value(l, bin) * *w)
            .sum()
    }
}

/// Solves the stacked two-unknown system for every channel and bin over the
/// active frames in `[t0 − T/2, t0 + T/2]`.
pub fn estimate_gfvv(
    cs: &CrossSpectra,
    w: &Beamformer,
    t0: usize,
    buffer_frames: usize,
    opts: &GtvvOptions,
) -> Result<GfvvSpectrum> {
    if buffer_frames % 2 != 0 || buffer_frames == 0 {
        return invalid(format!("buffer size {buffer_frames} must be even and positive"));
    }
    if w.weights.len() != cs.channels() {
        return invalid("beamformer does not match the channel count");
    }
    let lo = t0.saturating_sub(buffer_frames / 2);
    let hi = (t0 + buffer_frames / 2).min(cs.frames().saturating_sub(1));
    let frames: Vec<usize> = (lo..=hi).filter(|&t| cs.active[t]).collect();
    if frames.len() < MIN_ACTIVE_FRAMES {
        return Err(Error::TooFewFrames {
            active: frames.len(),
            required: MIN_ACTIVE_FRAMES,
        });
    }
    let channels = cs.channels();
    let bins = cs.freq_bins();
    let fs = cs.stft.sample_rate;
    let n = frames.len() as f64;

    let per_bin: Vec<(Vec<Complex64>, Vec<Complex64>, bool)> = (0..bins)
        .into_par_iter()
        .map(|bin| {
            let zero = Complex64::new(0.0, 0.0);
            let mut v = vec![zero; channels];
            let mut sigma = vec![zero; channels];
            if !opts.band_valid(bin, bins, fs) {
                return (v, sigma, false);
            }
            for l in 0..channels {
                let (mut sxx, mut sx, mut sxy, mut sy) = (0.0, zero, zero, 0.0);
                for &t in &frames {
                    let (y, x) = cs.reference_terms(&w.weights, l, t, bin);
                    sxx += x.norm_sqr();
                    sx += x;
                    sxy += x.conj() * y;
                    sy += y;
                }
                if sxx == 0.0 {
                    return (vec![zero; channels], vec![zero; channels], false);
                }
                let a00 = sxx * (1.0 + opts.ridge);
                let a11 = n * (1.0 + opts.ridge);
                let det = a00 * a11 - sx.norm_sqr();
                if !(det > 1e-14 * a00 * a11) {
                    return (vec![zero; channels], vec![zero; channels], false);
                }
                // [[a00, conj(sx)], [sx, a11]]⁻¹ [sxy, sy]
                v[l] = (sxy * a11 - sx.conj() * sy) / det;
                sigma[l] = (Complex64::new(sy, 0.0) * a00 - sx * sxy) / det;
            }
            let response: Complex64 = w.weights.iter().zip(&v).map(|(wl, vl)| vl * *wl).sum();
            if response.norm() < 1e-12 {
                return (vec![zero; channels], vec![zero; channels], false);
            }
            // Project onto wᵀv = 1, which the ratio definition satisfies exactly.
            v.iter_mut().for_each(|x| *x /= response);
            (v, sigma, true)
        })
        .collect();

    let mut v = vec![Complex64::new(0.0, 0.0); channels * bins];
    let mut sigma = v.clone();
    let mut valid = vec![false; bins];
    for (bin, (vb, sb, ok)) in per_bin.into_iter().enumerate() {
        valid[bin] = ok;
        for l in 0..channels {
            v[l * bins + bin] = vb[l];
            sigma[l * bins + bin] = sb[l];
        }
    }
    Ok(GfvvSpectrum {
        v,
        sigma,
        valid,
        beamformer: w.clone(),
        frame_center: t0,
        channels,
        bins,
        sample_rate: fs,
    })
}

/// Fills invalid bins by linear interpolation between valid neighbours,
/// holding the end values constant.
fn fill_invalid(values: &mut [Complex64], valid: &[bool]) -> Result<()> {
    let idx: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    let (first, last) = match (idx.first(), idx.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return invalid("no valid frequency bins"),
    };
    for i in 0..first {
        values[i] = values[first];
    }
    for i in last + 1..values.len() {
        values[i] = values[last];
    }
    for pair in idx.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            values[i] = values[a] * (1.0 - t) + values[b] * t;
        }
    }
    Ok(())
}

/// Channel-wise inverse FFT to the centred time axis.
pub fn gfvv_to_gtvv(g: &GfvvSpectrum, window_len: usize) -> Result<GtvvMatrix> {
    if window_len != 2 * (g.bins - 1) {
        return invalid(format!(
            "{} bins do not match window length {window_len}",
            g.bins
        ));
    }
    let order = crate::sh::order_from_channels(g.channels)
        .ok_or_else(|| Error::Format("channel count is not an SH layout".into()))?;
    let fft = RealFft::new(window_len);
    let rows: Result<Vec<Vec<f64>>> = (0..g.channels)
        .map(|l| {
            let mut spec = g.v[l * g.bins..(l + 1) * g.bins].to_vec();
            fill_invalid(&mut spec, &g.valid)?;
            Ok(fft.inverse(&spec))
        })
        .collect();
    CenteredMatrix::from_circular(order, g.sample_rate, &rows?)
}

/// GTVV averaged over all buffers of a recording.
#[derive(Debug, Clone)]
pub struct GtvvEstimate {
    pub matrix: GtvvMatrix,
    pub beamformer: Beamformer,
    pub buffers: usize,
    /// Fraction of bins flagged valid, averaged over buffers.
    pub valid_fraction: f64,
    /// Validity mask of the last buffer, per bin.
    pub valid_mask: Vec<bool>,
}

pub fn buffer_centers(frames: usize, opts: &GtvvOptions) -> Vec<usize> {
    let half = opts.buffer_frames / 2;
    if frames <= opts.buffer_frames {
        return vec![frames / 2];
    }
    (half..frames - half)
        .step_by(opts.stride_frames.max(1))
        .collect()
}

pub fn estimate_gtvv(cs: &CrossSpectra, w: &Beamformer, opts: &GtvvOptions) -> Result<GtvvEstimate> {
    let window_len = cs.stft.window_len;
    let mut acc: Option<GtvvMatrix> = None;
    let mut count = 0usize;
    let mut valid_total = 0.0;
    let mut valid_mask = Vec::new();
    let mut last_err = None;
    for t0 in buffer_centers(cs.frames(), opts) {
        let spec = match estimate_gfvv(cs, w, t0, opts.buffer_frames, opts) {
            Ok(s) => s,
            Err(e @ Error::TooFewFrames { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if !spec.valid.iter().any(|&v| v) {
            continue;
        }
        let m = gfvv_to_gtvv(&spec, window_len)?;
        valid_total += spec.valid.iter().filter(|&&v| v).count() as f64 / spec.bins as f64;
        valid_mask = spec.valid;
        match acc.as_mut() {
            None => acc = Some(m),
            Some(a) => a
                .data_mut()
                .iter_mut()
                .zip(m.data())
                .for_each(|(x, y)| *x += y),
        }
        count += 1;
    }
    let mut matrix = match acc {
        Some(m) => m,
        None => {
            return Err(last_err.unwrap_or(Error::TooFewFrames {
                active: 0,
                required: MIN_ACTIVE_FRAMES,
            }))
        }
    };
    let scale = 1.0 / count as f64;
    matrix.data_mut().iter_mut().for_each(|x| *x *= scale);
    Ok(GtvvEstimate {
        matrix,
        beamformer: w.clone(),
        buffers: count,
        valid_fraction: valid_total / count as f64,
        valid_mask,
    })
}

#[derive(Debug, Clone)]
pub struct RefinedDoa {
    pub direction: Direction,
    pub estimate: GtvvEstimate,
    /// DoA read at each iteration; entry 0 comes from the omni reference.
    pub trace: Vec<Direction>,
    pub converged: bool,
}

impl RefinedDoa {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Starts from the omni reference, reads the DoA from v(t=0), re-steers a
/// maximum-directivity beamformer and repeats until the DoA moves by less
/// than `tol_deg` or `max_iter` GTVVs have been computed.
pub fn refine_doa(
    cs: &CrossSpectra,
    grid: &DirectionGrid,
    opts: &GtvvOptions,
    max_iter: usize,
    tol_deg: f64,
) -> Result<RefinedDoa> {
    refine_doa_from(cs, grid, opts, omni_beamformer(grid.order), max_iter, tol_deg)
}

/// Same loop with an arbitrary initial beamformer, e.g. one steered at a
/// dominant reflection.
pub fn refine_doa_from(
    cs: &CrossSpectra,
    grid: &DirectionGrid,
    opts: &GtvvOptions,
    initial: Beamformer,
    max_iter: usize,
    tol_deg: f64,
) -> Result<RefinedDoa> {
    if max_iter == 0 {
        return invalid("max_iter must be at least 1");
    }
    let order = grid.order;
    let mut w = initial;
    let mut trace = Vec::new();
    loop {
        let estimate = estimate_gtvv(cs, &w, opts)?;
        let (dir, _) = nearest_direction(&estimate.matrix.column(0), grid)?;
        let moved = trace
            .last()
            .map(|prev: &Direction| prev.angle_to_deg(&dir));
        trace.push(dir);
        let converged = moved.is_some_and(|m| m < tol_deg);
        if converged || trace.len() >= max_iter {
            return Ok(RefinedDoa {
                direction: dir,
                estimate,
                trace,
                converged,
            });
        }
        w = max_directivity_beamformer(dir, order);
    }
}

/// One-pole lowpass frequency response at normalized frequency `f / fs`.
fn lowpass_response(p: Option<f64>, nu: f64) -> Complex64 {
    match p {
        None => Complex64::new(1.0, 0.0),
        Some(p) => Complex64::new(1.0 - p, 0.0) / (1.0 - Complex64::from_polar(p, -2.0 * PI * nu)),
    }
}

/// Relative spectral factors κ̂_n(f) of each reflection for a wideband
/// reference `w`, at frequency `freq` Hz.
fn kappas(scene: &IsmScene, w: &Beamformer, freq: f64) -> Vec<Complex64> {
    let nu = freq / scene.sample_rate;
    let beta0 = w.response(&encode(&scene.direct().direction, scene.order).coeffs);
    let h0 = lowpass_response(scene.direct().lowpass, nu);
    (1..scene.wavefronts.len())
        .map(|n| {
            let wf = &scene.wavefronts[n];
            let beta = w.response(&encode(&wf.direction, scene.order).coeffs) / beta0;
            let g = scene.relative_gain(n) * lowpass_response(wf.lowpass, nu) / h0;
            g * beta
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorMargin {
    /// max_f |Σ_n κ̂_n(f) e^{−j2πfτ_n}| = max_f |â(f) − 1|.
    pub margin: f64,
    pub satisfied: bool,
    /// max_f Σ_n |κ̂_n(f)|, when per-wavefront data is available.
    pub stronger_bound: Option<f64>,
}

impl TaylorMargin {
    pub fn stronger_satisfied(&self) -> Option<bool> {
        self.stronger_bound.map(|b| b < 1.0)
    }
}

const MARGIN_GRID: usize = 16384;

/// Evaluates the minimum-phase condition of the reference filter analytically
/// from the scene on a dense frequency grid.
pub fn taylor_condition_margin(scene: &IsmScene, w: &Beamformer) -> TaylorMargin {
    let delays: Vec<f64> = (1..scene.wavefronts.len())
        .map(|n| scene.relative_delay(n))
        .collect();
    let mut margin: f64 = 0.0;
    let mut stronger: f64 = 0.0;
    for k in 0..=MARGIN_GRID {
        let f = k as f64 * scene.sample_rate / (2.0 * MARGIN_GRID as f64);
        let ks = kappas(scene, w, f);
        let sum: Complex64 = ks
            .iter()
            .zip(&delays)
            .map(|(kappa, tau)| kappa * Complex64::from_polar(1.0, -2.0 * PI * f * tau))
            .sum();
        margin = margin.max(sum.norm());
        stronger = stronger.max(ks.iter().map(|k| k.norm()).sum());
    }
    TaylorMargin {
        margin,
        satisfied: margin < 1.0,
        stronger_bound: Some(stronger),
    }
}

/// The same diagnostic from a sampled reference spectrum â(f).
pub fn margin_from_reference(a_hat: &[Complex64]) -> TaylorMargin {
    let margin = a_hat
        .iter()
        .map(|a| (a - 1.0).norm())
        .fold(0.0, f64::max);
    TaylorMargin {
        margin,
        satisfied: margin < 1.0,
        stronger_bound: None,
    }
}

/// Exact ratio x(f)/(wᵀx(f)) on the STFT bins of a `window_len` transform.
pub fn analytic_gfvv(scene: &IsmScene, w: &Beamformer, window_len: usize) -> GfvvSpectrum {
    let bins = window_len / 2 + 1;
    let channels = crate::sh::channel_count(scene.order);
    let ys: Vec<Vec<f64>> = scene
        .wavefronts
        .iter()
        .map(|wf| encode(&wf.direction, scene.order).coeffs)
        .collect();
    let mut v = vec![Complex64::new(0.0, 0.0); channels * bins];
    for bin in 0..bins {
        let freq = bin as f64 * scene.sample_rate / window_len as f64;
        let nu = freq / scene.sample_rate;
        let h0 = lowpass_response(scene.direct().lowpass, nu);
        let mut x: Vec<Complex64> = ys[0].iter().map(|&y| Complex64::new(y, 0.0)).collect();
        for n in 1..scene.wavefronts.len() {
            let wf = &scene.wavefronts[n];
            let coef = scene.relative_gain(n) * lowpass_response(wf.lowpass, nu) / h0
                * Complex64::from_polar(1.0, -2.0 * PI * freq * scene.relative_delay(n));
            for (xl, yl) in x.iter_mut().zip(&ys[n]) {
                *xl += coef * yl;
            }
        }
        let denom: Complex64 = w.weights.iter().zip(&x).map(|(wl, xl)| xl * *wl).sum();
        for l in 0..channels {
            v[l * bins + bin] = x[l] / denom;
        }
    }
    GfvvSpectrum {
        v,
        sigma: vec![Complex64::new(0.0, 0.0); channels * bins],
        valid: vec![true; bins],
        beamformer: w.clone(),
        frame_center: 0,
        channels,
        bins,
        sample_rate: scene.sample_rate,
    }
}

/// GTVV of the exact ratio, by direct spectral division.
pub fn analytic_gtvv(scene: &IsmScene, w: &Beamformer, window_len: usize) -> Result<GtvvMatrix> {
    gfvv_to_gtvv(&analytic_gfvv(scene, w, window_len), window_len)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub wavefront: usize,
    pub power: usize,
    /// κ_n^k (flat gains make the k-fold self-convolution a scalar).
    pub kappa_power: f64,
    /// k·τ_n in seconds.
    pub delay: f64,
    /// (−1)^k.
    pub sign: f64,
    /// Full channel vector (−1)^k κ_n^{k−1}(κ_n y0' − g_n' y_n).
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedFormSeries {
    pub terms: Vec<SeriesTerm>,
    pub truncation_k: usize,
    /// Per-sample bound on the dropped tail plus the omitted cross terms.
    pub residual_bound: f64,
}

/// Band-limited periodic delay kernel: the inverse one-sided DFT of
/// e^{−j2πkd/J}, with the Nyquist bin reduced to its real part.
pub fn periodic_delay_kernel(j: i64, delay: f64, len: usize) -> f64 {
    let jf = len as f64;
    if delay.fract() == 0.0 {
        return if (j - delay as i64).rem_euclid(len as i64) == 0 {
            1.0
        } else {
            0.0
        };
    }
    let theta = 2.0 * PI * (j as f64 - delay) / jf;
    let half = (theta / 2.0).sin();
    let dirichlet = if half.abs() < 1e-12 {
        jf - 1.0
    } else {
        ((jf - 1.0) * theta / 2.0).sin() / half
    };
    let nyquist = (PI * delay).cos() * if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    (dirichlet + nyquist) / jf
}

/// Truncated geometric-series expansion of the GTVV for frequency-flat
/// reflections and a wideband reference.
pub fn closed_form_gtvv(
    scene: &IsmScene,
    w: &Beamformer,
    truncation_k: usize,
    window_len: usize,
) -> Result<(GtvvMatrix, ClosedFormSeries)> {
    scene.validate()?;
    if scene.wavefronts.iter().any(|wf| wf.lowpass.is_some()) {
        return Err(Error::Unsupported(
            "closed form needs frequency-flat reflections".into(),
        ));
    }
    let margin = taylor_condition_margin(scene, w);
    if !margin.satisfied {
        return Err(Error::SeriesDivergent {
            margin: margin.margin,
        });
    }
    let order = scene.order;
    let fs = scene.sample_rate;
    let y0 = encode(&scene.direct().direction, order).coeffs;
    let beta0 = w.response(&y0);
    let y0p: Vec<f64> = y0.iter().map(|y| y / beta0).collect();

    let mut terms = Vec::new();
    let mut kappa_abs = Vec::new();
    let mut gain_abs = Vec::new();
    let mut ys = Vec::new();
    for n in 1..scene.wavefronts.len() {
        let yn = encode(&scene.wavefronts[n].direction, order).coeffs;
        let gp = scene.relative_gain(n) / beta0;
        let kappa = gp * w.response(&yn);
        let tau = scene.relative_delay(n);
        for k in 1..=truncation_k {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let kp = kappa.powi(k as i32);
            let kp1 = kappa.powi(k as i32 - 1);
            let vector = y0p
                .iter()
                .zip(&yn)
                .map(|(a, b)| sign * (kp * a - kp1 * gp * b))
                .collect();
            terms.push(SeriesTerm {
                wavefront: n,
                power: k,
                kappa_power: kp,
                delay: k as f64 * tau,
                sign,
                vector,
            });
        }
        kappa_abs.push(kappa.abs());
        gain_abs.push(gp.abs());
        ys.push(yn);
    }

    let total: f64 = kappa_abs.iter().sum();
    let residual_bound = if total >= 1.0 {
        f64::INFINITY
    } else {
        let inv_total = 1.0 / (1.0 - total);
        let single: f64 = kappa_abs.iter().map(|k| k / (1.0 - k)).sum();
        let cross0 = (inv_total - 1.0 - single).max(0.0);
        (0..y0p.len())
            .map(|l| {
                let tail0: f64 = kappa_abs
                    .iter()
                    .map(|k| k.powi(truncation_k as i32 + 1) / (1.0 - k))
                    .sum();
                let mut b = y0p[l].abs() * (tail0 + cross0);
                for (i, k) in kappa_abs.iter().enumerate() {
                    let tail = k.powi(truncation_k as i32) / (1.0 - k);
                    let cross = (inv_total - 1.0 / (1.0 - k)).max(0.0);
                    b += gain_abs[i] * ys[i][l].abs() * (tail + cross);
                }
                b
            })
            .fold(0.0, f64::max)
    };

    let mut m = CenteredMatrix::zeros(order, window_len, fs);
    for (l, y) in y0p.iter().enumerate() {
        m.set(l, 0, *y);
    }
    let (jlo, jhi) = (m.j_min(), m.j_max());
    for term in &terms {
        let d = term.delay * fs;
        // Integer delays hit one sample exactly; rounding noise in k·τ·fs is
        // snapped away so the kernel stays an exact impulse.
        let d = if (d - d.round()).abs() < 1e-9 { d.round() } else { d };
        for j in jlo..=jhi {
            let kval = periodic_delay_kernel(j, d, window_len);
            if kval == 0.0 {
                continue;
            }
            for (l, c) in term.vector.iter().enumerate() {
                let cur = m.get(l, j);
                m.set(l, j, cur + c * kval);
            }
        }
    }
    Ok((
        m,
        ClosedFormSeries {
            terms,
            truncation_k,
            residual_bound,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct PseudoIntensity {
    /// Per-frame sum over bins of Re(conj(b0)·b_{1:3}), as Cartesian (x, y, z).
    pub per_frame: Vec<[f64; 3]>,
    pub pooled: [f64; 3],
    pub direction: Direction,
}

/// Pseudointensity vectors from the first-order channels. ACN channels 1, 2
/// and 3 map to the y, z and x axes. Bins are pooled with |b0|² weights, which
/// amounts to summing the raw products.
pub fn pseudointensity(
    t: &StftTensor,
    active: &[bool],
    opts: &GtvvOptions,
) -> Result<PseudoIntensity> {
    if t.channels < 4 {
        return invalid("pseudointensity needs first-order input");
    }
    let bins = t.freq_bins();
    let mut per_frame = Vec::with_capacity(t.frames);
    let mut pooled = [0.0; 3];
    for frame in 0..t.frames {
        let mut acc = [0.0; 3];
        for bin in 0..bins {
            if !opts.band_valid(bin, bins, t.sample_rate) {
                continue;
            }
            let b0 = t.get(0, frame, bin).conj();
            let iy = (b0 * t.get(1, frame, bin)).re;
            let iz = (b0 * t.get(2, frame, bin)).re;
            let ix = (b0 * t.get(3, frame, bin)).re;
            acc[0] += ix;
            acc[1] += iy;
            acc[2] += iz;
        }
        if active.get(frame).copied().unwrap_or(true) {
            for k in 0..3 {
                pooled[k] += acc[k];
            }
        }
        per_frame.push(acc);
    }
    let direction = Direction::from_cartesian(pooled)?;
    Ok(PseudoIntensity {
        per_frame,
        pooled,
        direction,
    })
}

/// Reads the DoA encoded by the t = 0 column of a GTVV.
pub fn doa_from_gtvv(m: &GtvvMatrix, grid: &DirectionGrid) -> Result<Direction> {
    Ok(nearest_direction(&m.column(0), grid)?.0)
}

/// |wᵀv − 1| over valid bins.
pub fn max_reference_deviation(g: &GfvvSpectrum) -> f64 {
    (0..g.bins)
        .filter(|&b| g.valid[b])
        .map(|b| (g.reference_response(b) - 1.0).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ism::{render_recording, white_noise, NoiseSource, Wavefront};
    use crate::sh::{build_grid, norm};
    use crate::spectral::{cross_periodograms, stft, WindowKind};

    fn dir(az: f64, el: f64) -> Direction {
        Direction::from_degrees(az, el).unwrap()
    }

    fn scene(order: usize, echoes: &[(f64, f64, f64, f64)]) -> IsmScene {
        let mut w = vec![Wavefront::new(0.005, 1.0, dir(30.0, 10.0))];
        for &(delay_samples, gain, az, el) in echoes {
            w.push(Wavefront::new(
                0.005 + delay_samples / 16000.0,
                gain,
                dir(az, el),
            ));
        }
        IsmScene::new(w, order, 16000.0, 8).unwrap()
    }

    fn cross_spectra(s: &IsmScene, seconds: f64, window: usize) -> CrossSpectra {
        let exc = white_noise((seconds * 16000.0) as usize, 5);
        let rec = render_recording(s, &exc, f64::INFINITY, &NoiseSource::Isotropic { seed: 0 })
            .unwrap();
        let t = stft(&rec.signal, window, 0.75, WindowKind::Tukey { taper: 0.25 }).unwrap();
        cross_periodograms(&t)
    }

    #[test]
    fn plane_wave_gives_encoding_vector() {
        let s = scene(2, &[]);
        let cs = cross_spectra(&s, 1.0, 256);
        let y0 = encode(&s.direct().direction, 2);
        for w in [
            omni_beamformer(2),
            max_directivity_beamformer(dir(50.0, 0.0), 2),
        ] {
            let g = estimate_gfvv(&cs, &w, 20, 16, &GtvvOptions::default()).unwrap();
            for b in (0..g.bins).filter(|&b| g.valid[b]) {
                let scale = w.response(&y0.coeffs);
                for l in 0..9 {
                    assert!((g.value(l, b) - y0.coeffs[l] / scale).norm() < 1e-6);
                }
            }
            assert!(max_reference_deviation(&g) < 1e-6);
        }
    }

    #[test]
    fn two_wavefront_scene_matches_ratio() {
        // Integer delay short relative to the window keeps the STFT
        // multiplicative model accurate.
        let s = scene(1, &[(3.0, 0.5, -80.0, 0.0)]);
        let cs = cross_spectra(&s, 4.0, 1024);
        let w = omni_beamformer(1);
        let analytic = analytic_gfvv(&s, &w, 1024);
        let est = estimate_gtvv(&cs, &w, &GtvvOptions::default()).unwrap();
        // Same band mask on the reference, so only estimation error remains.
        let mut masked = analytic.clone();
        masked.valid = est.valid_mask.clone();
        let reference = gfvv_to_gtvv(&masked, 1024).unwrap();
        let err: f64 = est
            .matrix
            .data()
            .iter()
            .zip(reference.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err / reference.frobenius_norm() < 5e-2, "rel err {err}");
        // Per-bin check on one buffer.
        let g = estimate_gfvv(&cs, &w, 40, 16, &GtvvOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for b in (0..g.bins).filter(|&b| g.valid[b]) {
            for l in 0..4 {
                let a = analytic.value(l, b);
                worst = worst.max((g.value(l, b) - a).norm() / a.norm().max(1.0));
            }
        }
        assert!(worst < 5e-2, "worst {worst}");
    }

    #[test]
    fn scale_invariance() {
        let s = scene(1, &[(12.0, 0.6, 100.0, 20.0)]);
        let cs = cross_spectra(&s, 1.0, 256);
        let mut scaled = cs.clone();
        let mut t = cs.stft.clone();
        for ch in 0..t.channels {
            for f in 0..t.frames {
                for b in 0..t.freq_bins() {
                    let v = t.get(ch, f, b) * 1e3;
                    t.set(ch, f, b, v);
                }
            }
        }
        scaled.stft = t;
        let w = max_directivity_beamformer(dir(30.0, 10.0), 1);
        let a = estimate_gfvv(&cs, &w, 20, 16, &GtvvOptions::default()).unwrap();
        let b = estimate_gfvv(&scaled, &w, 20, 16, &GtvvOptions::default()).unwrap();
        for (x, y) in a.v.iter().zip(&b.v) {
            assert!((x - y).norm() < 1e-6);
        }
    }

    #[test]
    fn too_few_frames() {
        let s = scene(1, &[]);
        let mut cs = cross_spectra(&s, 0.5, 256);
        cs.active.iter_mut().for_each(|a| *a = false);
        assert!(matches!(
            estimate_gfvv(&cs, &omni_beamformer(1), 10, 8, &GtvvOptions::default()),
            Err(Error::TooFewFrames { .. })
        ));
    }

    #[test]
    fn constant_spectrum_to_impulse() {
        let d = dir(-40.0, 25.0);
        let y = encode(&d, 1);
        let bins = 33;
        let mut g = GfvvSpectrum {
            v: vec![Complex64::new(0.0, 0.0); 4 * bins],
            sigma: vec![Complex64::new(0.0, 0.0); 4 * bins],
            valid: vec![true; bins],
            beamformer: omni_beamformer(1),
            frame_center: 0,
            channels: 4,
            bins,
            sample_rate: 16000.0,
        };
        for l in 0..4 {
            for b in 0..bins {
                g.v[l * bins + b] = Complex64::new(y.coeffs[l], 0.0);
            }
        }
        let m = gfvv_to_gtvv(&g, 64).unwrap();
        for j in m.j_min()..=m.j_max() {
            for l in 0..4 {
                let expect = if j == 0 { y.coeffs[l] } else { 0.0 };
                assert!((m.get(l, j) - expect).abs() < 1e-12);
            }
        }
        // Shift theorem: a linear phase moves the impulse to j = τ·fs.
        for l in 0..4 {
            for b in 0..bins {
                let phase = -2.0 * PI * b as f64 * 5.0 / 64.0;
                g.v[l * bins + b] = Complex64::from_polar(y.coeffs[l], phase);
            }
        }
        let m = gfvv_to_gtvv(&g, 64).unwrap();
        for l in 0..4 {
            assert!((m.get(l, 5) - y.coeffs[l]).abs() < 1e-12);
            assert!(m.get(l, 4).abs() < 1e-12);
        }
        assert!(gfvv_to_gtvv(&g, 128).is_err());
    }

    #[test]
    fn interpolation_fills_gaps() {
        let mut v: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let valid = [false, true, false, false, true, false];
        v[2] = Complex64::new(99.0, 0.0);
        fill_invalid(&mut v, &valid).unwrap();
        let re: Vec<f64> = v.iter().map(|c| c.re).collect();
        assert_eq!(re, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(fill_invalid(&mut v, &[false; 6]).is_err());
    }

    #[test]
    fn taylor_margin_examples() {
        let w = omni_beamformer(1);
        let one = scene(1, &[(20.0, 0.3, 90.0, 0.0)]);
        let m = taylor_condition_margin(&one, &w);
        assert!((m.margin - 0.3).abs() < 1e-9);
        assert!(m.satisfied);
        let two = scene(1, &[(20.0, 0.6, 90.0, 0.0), (33.0, 0.7, -90.0, 0.0)]);
        let m = taylor_condition_margin(&two, &w);
        assert!((m.stronger_bound.unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(m.stronger_satisfied(), Some(false));
        let none = scene(1, &[]);
        let m = taylor_condition_margin(&none, &w);
        assert_eq!(m.margin, 0.0);
        assert!(m.satisfied);
    }

    #[test]
    fn closed_form_without_echoes() {
        let s = scene(2, &[]);
        let (m, series) = closed_form_gtvv(&s, &omni_beamformer(2), 10, 64).unwrap();
        assert!(series.terms.is_empty());
        let y0 = encode(&s.direct().direction, 2);
        for j in m.j_min()..=m.j_max() {
            for l in 0..9 {
                let e = if j == 0 { y0.coeffs[l] } else { 0.0 };
                assert_eq!(m.get(l, j), e);
            }
        }
    }

    #[test]
    fn closed_form_sign_alternates() {
        // Steered reference with a positive sidelobe toward the echo.
        let s = scene(1, &[(10.0, 0.7, 80.0, 10.0)]);
        let w = max_directivity_beamformer(s.direct().direction, 1);
        let yn = encode(&s.wavefronts[1].direction, 1);
        assert!(w.response(&yn.coeffs) > 0.0);
        let (m, _) = closed_form_gtvv(&s, &w, 30, 512).unwrap();
        let (a, b) = (m.get(0, 10), m.get(0, 20));
        assert!(a * b < 0.0, "{a} {b}");
    }

    #[test]
    fn closed_form_matches_division_fractional() {
        let s = scene(2, &[(17.3, 0.6, 120.0, -20.0)]);
        let w = omni_beamformer(2);
        let (m, series) = closed_form_gtvv(&s, &w, 60, 1024).unwrap();
        let d = analytic_gtvv(&s, &w, 1024).unwrap();
        let worst = m
            .data()
            .iter()
            .zip(d.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "worst {worst}");
        assert!(worst <= series.residual_bound + 1e-12);
    }

    #[test]
    fn residual_bound_monotone() {
        let s = scene(2, &[(10.0, 0.3, 90.0, 0.0), (25.0, 0.4, -60.0, 30.0)]);
        let w = max_directivity_beamformer(s.direct().direction, 2);
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let (_, series) = closed_form_gtvv(&s, &w, k, 256).unwrap();
            assert!(series.residual_bound <= prev);
            prev = series.residual_bound;
        }
        // The bound covers the omitted cross terms too.
        let (m, series) = closed_form_gtvv(&s, &w, 40, 256).unwrap();
        let d = analytic_gtvv(&s, &w, 256).unwrap();
        let worst = m
            .data()
            .iter()
            .zip(d.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= series.residual_bound);
    }

    #[test]
    fn divergent_series_is_an_error() {
        let s = scene(1, &[(10.0, 0.9, 90.0, 0.0), (20.0, 0.9, -90.0, 0.0)]);
        assert!(matches!(
            closed_form_gtvv(&s, &omni_beamformer(1), 10, 256),
            Err(Error::SeriesDivergent { .. })
        ));
    }

    #[test]
    fn plane_wave_doa_in_one_step() {
        let s = scene(1, &[]);
        let cs = cross_spectra(&s, 1.0, 256);
        let grid = build_grid(4.0, 1).unwrap();
        let r = refine_doa(&cs, &grid, &GtvvOptions::default(), 10, 1.0).unwrap();
        assert!(r.direction.angle_to_deg(&s.direct().direction) < 4.0);
        assert_eq!(r.iterations(), 2);
        assert!(r.converged);

        let once = refine_doa(&cs, &grid, &GtvvOptions::default(), 1, 1.0).unwrap();
        assert_eq!(once.iterations(), 1);
        assert!(once.estimate.beamformer.is_omni());
    }

    #[test]
    fn refined_doa_not_worse_than_omni() {
        let s = scene(3, &[(40.0, 0.5, 70.0, 0.0)]);
        let cs = cross_spectra(&s, 3.0, 1024);
        let grid = build_grid(2.0, 3).unwrap();
        let r = refine_doa(&cs, &grid, &GtvvOptions::default(), 10, 1.0).unwrap();
        let truth = s.direct().direction;
        let first = r.trace[0].angle_to_deg(&truth);
        let last = r.direction.angle_to_deg(&truth);
        assert!(last <= first + 1e-9, "{first} -> {last}");
    }

    #[test]
    fn pseudointensity_plane_wave_and_zero_b0() {
        let s = scene(1, &[]);
        let cs = cross_spectra(&s, 1.0, 256);
        let piv = pseudointensity(&cs.stft, &cs.active, &GtvvOptions::default()).unwrap();
        assert!(piv.direction.angle_to_deg(&s.direct().direction) < 1e-6);

        let mut t = cs.stft.clone();
        for b in 0..t.freq_bins() {
            t.set(0, 3, b, Complex64::new(0.0, 0.0));
        }
        let piv = pseudointensity(&t, &cs.active, &GtvvOptions::default()).unwrap();
        assert_eq!(piv.per_frame[3], [0.0, 0.0, 0.0]);

        let mono = StftTensor::zeros(1, 2, 8, 4, 16000.0, WindowKind::Hann, 8);
        assert!(pseudointensity(&mono, &[true, true], &GtvvOptions::default()).is_err());
    }

    #[test]
    fn periodic_kernel_matches_fft() {
        let fft = RealFft::new(32);
        let d = 5.37;
        let spec: Vec<Complex64> = (0..17)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 * d / 32.0))
            .collect();
        let x = fft.inverse(&spec);
        for n in 0..32 {
            assert!((periodic_delay_kernel(n as i64, d, 32) - x[n]).abs() < 1e-12);
        }
        assert!(norm(&x) > 0.0);
    }
}

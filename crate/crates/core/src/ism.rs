//! Wavefront-list image-source scenes: ground-truth Ambisonic RIRs and
//! rendered noisy recordings.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sh::{build_grid, encode, Direction};
use crate::signal::{convolve_channels, AmbisonicSignal};

/// Parameters for drawing random wavefront scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSceneSpec {
    pub order: usize,
    pub sample_rate: f64,
    /// Number of reflections besides the direct path.
    pub reflections: usize,
    pub gain_range: (f64, f64),
    /// Relative delay range in seconds.
    pub delay_range: (f64, f64),
    pub min_separation: f64,
    /// Direct-path time of arrival in seconds.
    pub direct_toa: f64,
    /// Round delays to whole samples.
    pub integer_delays: bool,
    pub pulse_halfwidth: usize,
}

impl Default for RandomSceneSpec {
    fn default() -> Self {
        Self {
            order: 3,
            sample_rate: 16000.0,
            reflections: 5,
            gain_range: (0.3, 0.8),
            delay_range: (0.001, 0.040),
            min_separation: 0.002,
            direct_toa: 0.005,
            integer_delays: true,
            pulse_halfwidth: 8,
        }
    }
}

/// Uniform random direction on the sphere.
pub fn random_direction<R: Rng>(rng: &mut R) -> Direction {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let az: f64 = rng.gen_range(-PI..PI);
    Direction::new(az, z.asin()).expect("elevation within range")
}

/// Draws a scene with a unit-gain direct path and reflections whose delays
/// respect the minimum separation (rejection sampling).
pub fn random_scene(spec: &RandomSceneSpec, seed: u64) -> Result<IsmScene> {
    let (dlo, dhi) = spec.delay_range;
    let span = dhi - dlo;
    if !(span >= 0.0) || spec.min_separation * spec.reflections.saturating_sub(1) as f64 > span {
        return invalid("delay range cannot hold the requested reflections");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = spec.sample_rate;
    let mut delays: Vec<f64> = Vec::new();
    let mut attempts = 0;
    while delays.len() < spec.reflections {
        attempts += 1;
        if attempts > 100_000 {
            return invalid("could not place reflections with the requested separation");
        }
        let mut d = rng.gen_range(dlo..=dhi);
        if spec.integer_delays {
            d = (d * fs).round() / fs;
        }
        if delays
            .iter()
            .all(|&e| (e - d).abs() >= spec.min_separation - 1e-12)
        {
            delays.push(d);
        }
    }
    delays.sort_by(f64::total_cmp);
    let mut wavefronts = vec![Wavefront::new(spec.direct_toa, 1.0, random_direction(&mut rng))];
    for d in delays {
        let g = rng.gen_range(spec.gain_range.0..=spec.gain_range.1);
        wavefronts.push(Wavefront::new(spec.direct_toa + d, g, random_direction(&mut rng)));
    }
    IsmScene::new(wavefronts, spec.order, fs, spec.pulse_halfwidth)
}

/// Frame length used for the energy gate when measuring SNR.
const SNR_FRAME: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wavefront {
    /// Time of arrival, seconds.
    pub toa: f64,
    /// Absolute attenuation.
    pub gain: f64,
    pub direction: Direction,
    /// Optional one-pole lowpass coefficient in [0, 1) applied to this
    /// wavefront only. Makes its relative gain frequency dependent.
    #[serde(default)]
    pub lowpass: Option<f64>,
}

impl Wavefront {
    pub fn new(toa: f64, gain: f64, direction: Direction) -> Self {
        Self {
            toa,
            gain,
            direction,
            lowpass: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffuseTail {
    pub onset: f64,
    pub rt60: f64,
    /// Root energy of the tail on channel 0.
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsmScene {
    /// Index 0 is the direct path.
    pub wavefronts: Vec<Wavefront>,
    pub order: usize,
    pub sample_rate: f64,
    /// Half-width of the Hann-windowed sinc pulse, in samples.
    pub pulse_halfwidth: usize,
    pub diffuse: Option<DiffuseTail>,
}

impl IsmScene {
    pub fn new(
        wavefronts: Vec<Wavefront>,
        order: usize,
        sample_rate: f64,
        pulse_halfwidth: usize,
    ) -> Result<Self> {
        let scene = Self {
            wavefronts,
            order,
            sample_rate,
            pulse_halfwidth,
            diffuse: None,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavefronts.is_empty() {
            return invalid("scene needs at least one wavefront");
        }
        if !(self.sample_rate > 0.0) {
            return invalid("sample rate must be positive");
        }
        if self.pulse_halfwidth == 0 {
            return invalid("pulse half-width must be at least one sample");
        }
        for (i, w) in self.wavefronts.iter().enumerate() {
            if !(w.gain > 0.0) || !w.gain.is_finite() {
                return invalid(format!("wavefront {i}: gain must be positive"));
            }
            if !(w.toa >= 0.0) || !w.toa.is_finite() {
                return invalid(format!("wavefront {i}: toa must be nonnegative"));
            }
            if let Some(p) = w.lowpass {
                if !(0.0..1.0).contains(&p) {
                    return invalid(format!("wavefront {i}: lowpass coefficient outside [0,1)"));
                }
            }
        }
        let direct = self.wavefronts[0].toa;
        for pair in self.wavefronts.windows(2) {
            if pair[1].toa < pair[0].toa {
                return invalid("wavefronts must be sorted by toa");
            }
        }
        if self.wavefronts[1..].iter().any(|w| w.toa <= direct) {
            return invalid("direct wavefront must arrive strictly first");
        }
        if let Some(t) = &self.diffuse {
            if !(t.rt60 > 0.0) {
                return invalid("rt60 must be positive");
            }
            if t.onset < self.wavefronts.last().map_or(0.0, |w| w.toa) {
                return invalid("diffuse onset precedes the last wavefront");
            }
        }
        Ok(())
    }

    pub fn direct(&self) -> &Wavefront {
        &self.wavefronts[0]
    }

    /// g_n = ν_n / ν_0.
    pub fn relative_gain(&self, n: usize) -> f64 {
        self.wavefronts[n].gain / self.wavefronts[0].gain
    }

    /// τ_n = τ̄_n − τ̄_0, seconds.
    pub fn relative_delay(&self, n: usize) -> f64 {
        self.wavefronts[n].toa - self.wavefronts[0].toa
    }

    /// Shortest RIR length holding every pulse (and the tail, if any).
    pub fn natural_length(&self) -> usize {
        let last = self.wavefronts.iter().map(|w| w.toa).fold(0.0, f64::max);
        let mut len = (last * self.sample_rate).floor() as usize + self.pulse_halfwidth + 1;
        if let Some(t) = &self.diffuse {
            len = len.max(((t.onset + t.rt60) * self.sample_rate).ceil() as usize + 1);
        }
        len
    }

    /// Same geometry at a lower order.
    pub fn with_order(&self, order: usize) -> Self {
        let mut s = self.clone();
        s.order = order;
        s
    }
}

/// Hann-windowed sinc, even, unity at 0, zero for |t| ≥ half_width.
pub fn pulse(t: f64, half_width: usize) -> f64 {
    let h = half_width as f64;
    if t.abs() >= h {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    if t.fract() == 0.0 {
        return 0.0;
    }
    let sinc = (PI * t).sin() / (PI * t);
    sinc * 0.5 * (1.0 + (PI * t / h).cos())
}

fn one_pole(x: &mut [f64], p: f64) {
    let mut state = 0.0;
    for v in x.iter_mut() {
        state = (1.0 - p) * *v + p * state;
        *v = state;
    }
}

pub fn synthesize_rir(scene: &IsmScene, length: usize) -> Result<AmbisonicSignal> {
    scene.validate()?;
    let fs = scene.sample_rate;
    let hw = scene.pulse_halfwidth;
    let required = scene
        .wavefronts
        .iter()
        .map(|w| (w.toa * fs).floor() as usize + hw + 1)
        .max()
        .unwrap_or(0);
    if length < required {
        return Err(Error::LengthTooShort {
            requested: length,
            required,
        });
    }
    let mut out = AmbisonicSignal::zeros(scene.order, fs, length);
    for w in &scene.wavefronts {
        let mut center = w.toa * fs;
        // Snap float noise so integer-sample arrivals are exact impulses.
        if (center - center.round()).abs() < 1e-9 {
            center = center.round();
        }
        let first = (center - hw as f64).ceil().max(0.0) as usize;
        let last = ((center + hw as f64).floor() as usize).min(length - 1);
        let mut samples: Vec<f64> = (first..=last)
            .map(|n| w.gain * pulse(n as f64 - center, hw))
            .collect();
        if let Some(p) = w.lowpass {
            // The filter tail extends to the end of the buffer.
            samples.resize(length - first, 0.0);
            one_pole(&mut samples, p);
        }
        let y = encode(&w.direction, scene.order);
        for (ch, &gain) in out.channels.iter_mut().zip(&y.coeffs) {
            for (k, s) in samples.iter().enumerate() {
                ch[first + k] += gain * s;
            }
        }
    }
    if let Some(tail) = &scene.diffuse {
        add_diffuse_tail(&mut out, tail);
    }
    Ok(out)
}

/// Exponentially decaying noise, independent across a dense direction set.
fn add_diffuse_tail(out: &mut AmbisonicSignal, tail: &DiffuseTail) {
    let fs = out.sample_rate;
    let start = (tail.onset * fs).ceil() as usize;
    if start >= out.len() {
        return;
    }
    let grid = build_grid(20.0, out.order).expect("fixed resolution is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(tail.seed);
    let decay = -3.0 * 10f64.ln() / (tail.rt60 * fs);
    let n = out.len() - start;
    let mut field = AmbisonicSignal::zeros(out.order, fs, n);
    for dir in &grid.directions {
        let y = encode(dir, out.order);
        for k in 0..n {
            let s: f64 = rng.sample::<f64, _>(StandardNormal) * (decay * k as f64).exp();
            for (ch, g) in field.channels.iter_mut().zip(&y.coeffs) {
                ch[k] += g * s;
            }
        }
    }
    let energy: f64 = field.channels[0].iter().map(|x| x * x).sum();
    if energy == 0.0 {
        return;
    }
    let scale = tail.level / energy.sqrt();
    for (dst, src) in out.channels.iter_mut().zip(&field.channels) {
        for (k, v) in src.iter().enumerate() {
            dst[start + k] += scale * v;
        }
    }
}

#[derive(Debug, Clone)]
pub enum NoiseSource {
    /// Independent white noise from a dense set of directions.
    Isotropic { seed: u64 },
    /// A prepared noise recording, tiled to the needed length.
    Signal(AmbisonicSignal),
}

#[derive(Debug, Clone)]
pub struct RenderedSignal {
    pub signal: AmbisonicSignal,
    pub ground_truth: IsmScene,
    pub snr_db: f64,
}

pub fn isotropic_noise(order: usize, sample_rate: f64, len: usize, seed: u64) -> AmbisonicSignal {
    let grid = build_grid(15.0, order).expect("fixed resolution is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AmbisonicSignal::zeros(order, sample_rate, len);
    let scale = 1.0 / (grid.len() as f64).sqrt();
    for dir in &grid.directions {
        let y = encode(dir, order);
        for k in 0..len {
            let s: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
            for (ch, g) in out.channels.iter_mut().zip(&y.coeffs) {
                ch[k] += g * s;
            }
        }
    }
    out
}

/// Frames (of `SNR_FRAME` samples) whose channel-0 energy exceeds the median.
fn active_frames(x: &[f64]) -> Vec<usize> {
    let energies: Vec<f64> = x
        .chunks(SNR_FRAME)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let mut sorted = energies.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let active: Vec<usize> = energies
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > median)
        .map(|(i, _)| i)
        .collect();
    if active.is_empty() {
        (0..energies.len()).collect()
    } else {
        active
    }
}

/// Channel-0 power of `x` over the given frames.
fn gated_power(x: &[f64], frames: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &f in frames {
        let chunk = &x[f * SNR_FRAME..((f + 1) * SNR_FRAME).min(x.len())];
        sum += chunk.iter().map(|v| v * v).sum::<f64>();
        count += chunk.len();
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Channel-0 SNR in dB of `clean` against `noise`, over the frames where the
/// clean signal is active.
pub fn measured_snr_db(clean: &[f64], noise: &[f64]) -> f64 {
    let frames = active_frames(clean);
    10.0 * (gated_power(clean, &frames) / gated_power(noise, &frames)).log10()
}

pub fn render_recording(
    scene: &IsmScene,
    excitation: &[f64],
    snr_db: f64,
    noise: &NoiseSource,
) -> Result<RenderedSignal> {
    if excitation.is_empty() {
        return invalid("excitation is empty");
    }
    let rir = synthesize_rir(scene, scene.natural_length())?;
    let mut signal = convolve_channels(excitation, &rir);
    if snr_db.is_finite() {
        let len = signal.len();
        let noise_sig = match noise {
            NoiseSource::Isotropic { seed } => {
                isotropic_noise(scene.order, scene.sample_rate, len, *seed)
            }
            NoiseSource::Signal(n) => {
                if n.num_channels() < signal.num_channels() || n.is_empty() {
                    return invalid("noise signal has too few channels or no samples");
                }
                let mut tiled = AmbisonicSignal::zeros(scene.order, scene.sample_rate, len);
                for (dst, src) in tiled.channels.iter_mut().zip(&n.channels) {
                    for (k, v) in dst.iter_mut().enumerate() {
                        *v = src[k % src.len()];
                    }
                }
                tiled
            }
        };
        let frames = active_frames(&signal.channels[0]);
        let ps = gated_power(&signal.channels[0], &frames);
        let pn = gated_power(&noise_sig.channels[0], &frames);
        if pn == 0.0 {
            return invalid("noise has zero power but a finite SNR was requested");
        }
        let gain = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
        for (dst, src) in signal.channels.iter_mut().zip(&noise_sig.channels) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += gain * s;
            }
        }
    }
    Ok(RenderedSignal {
        signal,
        ground_truth: scene.clone(),
        snr_db,
    })
}

/// Samplewise average of the post-onset parts of reverberant RIRs.
pub fn build_diffuse_noise(rirs: &[AmbisonicSignal], onset: f64) -> Result<AmbisonicSignal> {
    let first = rirs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no RIRs given".into()))?;
    let tails: Vec<(usize, &AmbisonicSignal)> = rirs
        .iter()
        .map(|r| ((onset * r.sample_rate).round() as usize, r))
        .filter(|(start, r)| r.len() > *start)
        .collect();
    if tails.is_empty() {
        return invalid("every RIR is shorter than the onset");
    }
    if rirs
        .iter()
        .any(|r| r.num_channels() != first.num_channels() || r.sample_rate != first.sample_rate)
    {
        return invalid("RIRs differ in channel count or sample rate");
    }
    let len = tails.iter().map(|(s, r)| r.len() - s).max().unwrap_or(0);
    let mut out = AmbisonicSignal::zeros(first.order, first.sample_rate, len);
    let scale = 1.0 / tails.len() as f64;
    for (start, r) in &tails {
        for (dst, src) in out.channels.iter_mut().zip(&r.channels) {
            for (d, s) in dst.iter_mut().zip(&src[*start..]) {
                *d += scale * s;
            }
        }
    }
    Ok(out)
}

pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Speech-shaped noise: white noise through a resonant AR(2) filter with a
/// slow syllabic amplitude modulation.
pub fn speech_shaped_noise(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: f64 = 0.95;
    let theta = 2.0 * PI * 500.0 / sample_rate;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let (mut y1, mut y2) = (0.0, 0.0);
    (0..len)
        .map(|n| {
            let e: f64 = rng.sample(StandardNormal);
            let y = e + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            let env = 0.6 + 0.4 * (2.0 * PI * 4.0 * n as f64 / sample_rate).sin();
            y * env
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh::{dot, norm};

    fn dir(az: f64, el: f64) -> Direction {
        Direction::from_degrees(az, el).unwrap()
    }

    #[test]
    fn single_impulse_at_origin() {
        let d = dir(40.0, 10.0);
        let scene = IsmScene::new(vec![Wavefront::new(0.0, 1.0, d)], 1, 16000.0, 8).unwrap();
        let rir = synthesize_rir(&scene, 32).unwrap();
        let y = encode(&d, 1);
        assert_eq!(rir.channels[0][0], 1.0);
        assert!(rir.channels[0][1..].iter().all(|&v| v == 0.0));
        for c in 1..4 {
            assert!((rir.channels[c][0] - y.coeffs[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn direct_peak_sample() {
        let toa = 2.0 / 343.0;
        let scene =
            IsmScene::new(vec![Wavefront::new(toa, 1.0, dir(0.0, 0.0))], 0, 16000.0, 8).unwrap();
        let rir = synthesize_rir(&scene, 200).unwrap();
        let peak = rir.channels[0]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 93);
    }

    #[test]
    fn two_wavefront_peak_ratio() {
        let scene = IsmScene::new(
            vec![
                Wavefront::new(10.0 / 16000.0, 1.0, dir(0.0, 0.0)),
                Wavefront::new(60.0 / 16000.0, 0.5, dir(90.0, 0.0)),
            ],
            2,
            16000.0,
            8,
        )
        .unwrap();
        let rir = synthesize_rir(&scene, 100).unwrap();
        let zeta = |n: usize| norm(&rir.frame(n));
        assert!((zeta(60) / zeta(10) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_short_is_rejected() {
        let scene =
            IsmScene::new(vec![Wavefront::new(0.01, 1.0, dir(0.0, 0.0))], 1, 16000.0, 8).unwrap();
        assert!(matches!(
            synthesize_rir(&scene, 100),
            Err(Error::LengthTooShort { .. })
        ));
    }

    #[test]
    fn scene_validation() {
        let d = dir(0.0, 0.0);
        assert!(IsmScene::new(vec![], 1, 16000.0, 8).is_err());
        assert!(IsmScene::new(
            vec![Wavefront::new(0.01, 1.0, d), Wavefront::new(0.01, 0.5, d)],
            1,
            16000.0,
            8
        )
        .is_err());
        assert!(IsmScene::new(vec![Wavefront::new(0.01, -1.0, d)], 1, 16000.0, 8).is_err());
    }

    #[test]
    fn linear_in_gains() {
        let mk = |s: f64| {
            IsmScene::new(
                vec![
                    Wavefront::new(0.0021, 1.0 * s, dir(10.0, 5.0)),
                    Wavefront::new(0.0043, 0.4 * s, dir(-70.0, 20.0)),
                ],
                2,
                16000.0,
                8,
            )
            .unwrap()
        };
        let a = synthesize_rir(&mk(1.0), 120).unwrap();
        let b = synthesize_rir(&mk(2.5), 120).unwrap();
        for (ca, cb) in a.channels.iter().zip(&b.channels) {
            for (x, y) in ca.iter().zip(cb) {
                assert!((2.5 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn direct_column_is_encoding() {
        let d0 = dir(33.0, -12.0);
        let scene = IsmScene::new(
            vec![
                Wavefront::new(0.003, 0.9, d0),
                Wavefront::new(0.006, 0.5, dir(100.0, 40.0)),
            ],
            3,
            16000.0,
            8,
        )
        .unwrap();
        let rir = synthesize_rir(&scene, 200).unwrap();
        let col = rir.frame(48);
        let y = encode(&d0, 3);
        for (c, yc) in col.iter().zip(&y.coeffs) {
            assert!((c / col[0] - yc).abs() < 1e-6);
        }
        // first nonzero sample at the direct toa
        let first = rir.channels[0].iter().position(|&v| v != 0.0).unwrap();
        assert_eq!(first, 48);
    }

    #[test]
    fn tail_is_energy_normalized() {
        let mut scene =
            IsmScene::new(vec![Wavefront::new(0.0, 1.0, dir(0.0, 0.0))], 1, 16000.0, 8).unwrap();
        scene.diffuse = Some(DiffuseTail {
            onset: 0.01,
            rt60: 0.3,
            level: 0.2,
            seed: 3,
        });
        let rir = synthesize_rir(&scene, scene.natural_length()).unwrap();
        let e: f64 = rir.channels[0][160..].iter().map(|x| x * x).sum();
        assert!((e.sqrt() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn rendering_limits() {
        let d = dir(20.0, 0.0);
        let scene = IsmScene::new(
            vec![
                Wavefront::new(0.001, 1.0, d),
                Wavefront::new(0.004, 0.3, dir(-90.0, 0.0)),
            ],
            1,
            16000.0,
            8,
        )
        .unwrap();
        let rir = synthesize_rir(&scene, scene.natural_length()).unwrap();
        let delta = render_recording(&scene, &[1.0], f64::INFINITY, &NoiseSource::Isotropic { seed: 0 })
            .unwrap();
        for (a, b) in delta.signal.channels.iter().zip(&rir.channels) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let exc = white_noise(16000, 1);
        let clean = render_recording(&scene, &exc, f64::INFINITY, &NoiseSource::Isotropic { seed: 0 })
            .unwrap();
        let noisy = render_recording(&scene, &exc, 0.0, &NoiseSource::Isotropic { seed: 9 }).unwrap();
        let noise: Vec<f64> = noisy.signal.channels[0]
            .iter()
            .zip(&clean.signal.channels[0])
            .map(|(a, b)| a - b)
            .collect();
        let snr = measured_snr_db(&clean.signal.channels[0], &noise);
        assert!(snr.abs() < 0.1, "snr {snr}");
        let ratio = 10f64.powf(snr / 10.0);
        assert!((ratio - 1.0).abs() < 0.02);
        assert!(render_recording(&scene, &[], 0.0, &NoiseSource::Isotropic { seed: 0 }).is_err());
        let silent = NoiseSource::Signal(AmbisonicSignal::zeros(1, 16000.0, 10));
        assert!(render_recording(&scene, &exc, 10.0, &silent).is_err());
    }

    #[test]
    fn diffuse_noise_average() {
        let mk = |v: f64| {
            let mut s = AmbisonicSignal::zeros(0, 1000.0, 20);
            for (k, x) in s.channels[0].iter_mut().enumerate() {
                *x = v * k as f64;
            }
            s
        };
        let a = mk(1.0);
        let b = mk(3.0);
        let one = build_diffuse_noise(std::slice::from_ref(&a), 0.01).unwrap();
        assert_eq!(one.channels[0], a.channels[0][10..].to_vec());
        let same = build_diffuse_noise(&[a.clone(), a.clone()], 0.01).unwrap();
        assert_eq!(same.channels[0], a.channels[0][10..].to_vec());
        let avg = build_diffuse_noise(&[a.clone(), b.clone()], 0.01).unwrap();
        for (k, v) in avg.channels[0].iter().enumerate() {
            assert!((v - 2.0 * (k + 10) as f64).abs() < 1e-12);
        }
        assert!(build_diffuse_noise(&[a], 0.5).is_err());
    }

    #[test]
    fn isotropic_noise_is_spatially_white_on_average() {
        let n = isotropic_noise(1, 16000.0, 20000, 4);
        let p0: f64 = n.channels[0].iter().map(|x| x * x).sum::<f64>();
        let c01 = dot(&n.channels[0], &n.channels[3]);
        assert!(c01.abs() / p0 < 0.05);
    }

    #[test]
    fn random_scene_respects_spec() {
        let spec = RandomSceneSpec::default();
        let a = random_scene(&spec, 7).unwrap();
        assert_eq!(a.wavefronts.len(), 6);
        let d: Vec<f64> = (1..6).map(|n| a.relative_delay(n)).collect();
        for w in d.windows(2) {
            assert!(w[1] - w[0] >= 0.002 - 1e-9);
        }
        for (n, &x) in d.iter().enumerate() {
            assert!((0.001..=0.040).contains(&x));
            assert!(((x * 16000.0) - (x * 16000.0).round()).abs() < 1e-9);
            assert!((0.3..=0.8).contains(&a.relative_gain(n + 1)));
        }
        assert_eq!(random_scene(&spec, 7).unwrap(), a);
        let crowded = RandomSceneSpec { reflections: 30, ..spec };
        assert!(random_scene(&crowded, 1).is_err());
    }

    #[test]
    fn pulse_kernel_shape() {
        assert_eq!(pulse(0.0, 8), 1.0);
        for k in 1..8 {
            assert!(pulse(k as f64, 8).abs() < 1e-15);
        }
        assert_eq!(pulse(8.0, 8), 0.0);
        assert!((pulse(0.3, 8) - pulse(-0.3, 8)).abs() < 1e-15);
        assert!(pulse(0.3, 8) < 1.0);
    }
}

//! File formats: scene JSON, 32-bit float WAV with a JSON sidecar, the
//! binary GTVV/RDIR containers, echo lists and evaluation tables.
//!
//! Binary containers are little-endian:
//!
//! ```text
//! magic [4]  "GTVV" or "RDIR"
//! version u32, order u32, len u32, sample_rate f64
//! RDIR only: taps u32, then `taps` f64 filter coefficients
//! (order+1)² × len f64, row-major, column 0 at t = −len/2+1
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::axis::CenteredMatrix;
use crate::echoes::EchoEstimate;
use crate::error::{Error, Result};
use crate::ism::{DiffuseTail, IsmScene, Wavefront};
use crate::rdrir::ReferenceFilter;
use crate::sh::{channel_count, sn3d_to_n3d_gains, Beamformer, Direction};
use crate::signal::AmbisonicSignal;

pub const GTVV_MAGIC: [u8; 4] = *b"GTVV";
pub const RDIR_MAGIC: [u8; 4] = *b"RDIR";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| format_err(format!("{what}: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Angles in degrees, for files meant to be read by people.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionDeg {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl From<Direction> for DirectionDeg {
    fn from(d: Direction) -> Self {
        Self {
            azimuth_deg: d.azimuth_deg(),
            elevation_deg: d.elevation_deg(),
        }
    }
}

// ---------------------------------------------------------------- scenes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavefrontSpec {
    pub toa_s: f64,
    pub gain: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowpass: Option<f64>,
}

fn default_halfwidth() -> usize {
    8
}

/// Scene description with angles in degrees; the first wavefront is the
/// direct path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub order: usize,
    pub sample_rate: f64,
    #[serde(default = "default_halfwidth")]
    pub pulse_halfwidth: usize,
    pub wavefronts: Vec<WavefrontSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffuse: Option<DiffuseTail>,
}

impl SceneFile {
    pub fn to_scene(&self) -> Result<IsmScene> {
        let wavefronts = self
            .wavefronts
            .iter()
            .map(|w| {
                let direction = Direction::from_degrees(w.azimuth_deg, w.elevation_deg)
                    .map_err(|e| format_err(e.to_string()))?;
                Ok(Wavefront {
                    toa: w.toa_s,
                    gain: w.gain,
                    direction,
                    lowpass: w.lowpass,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = IsmScene {
            wavefronts,
            order: self.order,
            sample_rate: self.sample_rate,
            pulse_halfwidth: self.pulse_halfwidth,
            diffuse: self.diffuse.clone(),
        };
        scene.validate().map_err(|e| format_err(format!("scene: {e}")))?;
        Ok(scene)
    }

    pub fn from_scene(scene: &IsmScene) -> Self {
        Self {
            order: scene.order,
            sample_rate: scene.sample_rate,
            pulse_halfwidth: scene.pulse_halfwidth,
            wavefronts: scene
                .wavefronts
                .iter()
                .map(|w| WavefrontSpec {
                    toa_s: w.toa,
                    gain: w.gain,
                    azimuth_deg: w.direction.azimuth_deg(),
                    elevation_deg: w.direction.elevation_deg(),
                    lowpass: w.lowpass,
                })
                .collect(),
            diffuse: scene.diffuse.clone(),
        }
    }
}

pub fn read_scene(path: &Path) -> Result<IsmScene> {
    let text = std::fs::read_to_string(path)?;
    parse_json::<SceneFile>(&text, "scene file")?.to_scene()
}

pub fn write_scene(path: &Path, scene: &IsmScene) -> Result<()> {
    write_json(path, &SceneFile::from_scene(scene))
}

// ---------------------------------------------------------------- audio

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Normalization {
    N3d,
    Sn3d,
}

/// JSON file next to every WAV declaring its Ambisonic convention, plus the
/// ground truth for simulated recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub order: usize,
    pub ordering: String,
    pub normalization: Normalization,
    pub sample_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<SceneFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Sidecar {
    pub fn n3d(order: usize, sample_rate: f64) -> Self {
        Self {
            order,
            ordering: "ACN".into(),
            normalization: Normalization::N3d,
            sample_rate,
            ground_truth: None,
            snr_db: None,
            seed: None,
        }
    }
}

/// `rec.wav` → `rec.json`.
pub fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

pub fn read_sidecar(wav: &Path) -> Result<Sidecar> {
    let path = sidecar_path(wav);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            format_err(format!(
                "missing sidecar {} declaring order and normalization",
                path.display()
            ))
        } else {
            Error::Io(e)
        }
    })?;
    let s: Sidecar = parse_json(&text, "sidecar")?;
    if !s.ordering.eq_ignore_ascii_case("ACN") {
        return Err(format_err(format!(
            "channel ordering '{}' is not supported, ACN required",
            s.ordering
        )));
    }
    Ok(s)
}

/// Reads a 32-bit float WAV and its sidecar, converting SN3D to N3D.
pub fn read_wav(path: &Path) -> Result<(AmbisonicSignal, Sidecar)> {
    let reader = hound::WavReader::open(path)?;
    let sidecar = read_sidecar(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Float || spec.bits_per_sample != 32 {
        return Err(format_err("only 32-bit float WAV is supported"));
    }
    let nch = channel_count(sidecar.order);
    if spec.channels as usize != nch {
        return Err(format_err(format!(
            "WAV has {} channels, order {} needs {nch}",
            spec.channels, sidecar.order
        )));
    }
    if (spec.sample_rate as f64 - sidecar.sample_rate).abs() > 0.5 {
        return Err(format_err(format!(
            "WAV rate {} disagrees with sidecar rate {}",
            spec.sample_rate, sidecar.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<f32>()
        .collect::<std::result::Result<Vec<f32>, _>>()?;
    let len = samples.len() / nch;
    let mut channels = vec![Vec::with_capacity(len); nch];
    for frame in samples.chunks_exact(nch) {
        for (c, &s) in channels.iter_mut().zip(frame) {
            c.push(s as f64);
        }
    }
    if sidecar.normalization == Normalization::Sn3d {
        for (c, g) in channels.iter_mut().zip(sn3d_to_n3d_gains(sidecar.order)) {
            c.iter_mut().for_each(|v| *v *= g);
        }
    }
    let signal = AmbisonicSignal::new(sidecar.order, spec.sample_rate as f64, channels)?;
    Ok((signal, sidecar))
}

/// Writes an N3D signal and the sidecar (whose order, rate and
/// normalization are overwritten to match).
pub fn write_wav(path: &Path, signal: &AmbisonicSignal, sidecar: &Sidecar) -> Result<()> {
    if signal.sample_rate.fract() != 0.0 || signal.sample_rate > u32::MAX as f64 {
        return Err(format_err("WAV needs an integer sample rate"));
    }
    let spec = hound::WavSpec {
        channels: signal.num_channels() as u16,
        sample_rate: signal.sample_rate as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for n in 0..signal.len() {
        for c in &signal.channels {
            w.write_sample(c[n] as f32)?;
        }
    }
    w.finalize()?;
    let mut side = sidecar.clone();
    side.order = signal.order;
    side.ordering = "ACN".into();
    side.normalization = Normalization::N3d;
    side.sample_rate = signal.sample_rate;
    write_json(&sidecar_path(path), &side)
}

// ------------------------------------------------------- binary containers

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        format_err("file is truncated")
    } else {
        Error::Io(e)
    }
}

fn write_header(w: &mut impl Write, magic: [u8; 4], m: &CenteredMatrix) -> Result<()> {
    w.write_all(&magic)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, m.order as u32)?;
    put_u32(w, m.len() as u32)?;
    put_f64(w, m.sample_rate)
}

struct Header {
    order: usize,
    len: usize,
    sample_rate: f64,
}

fn read_header(r: &mut impl Read, magic: [u8; 4]) -> Result<Header> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(truncated)?;
    if got != magic {
        return Err(format_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let order = get_u32(r)? as usize;
    let len = get_u32(r)? as usize;
    let sample_rate = get_f64(r)?;
    if order > 16 || len < 2 || len % 2 != 0 || len > (1 << 26) || !(sample_rate > 0.0) {
        return Err(format_err(format!(
            "implausible header: order {order}, length {len}, rate {sample_rate}"
        )));
    }
    Ok(Header {
        order,
        len,
        sample_rate,
    })
}

fn write_data(w: &mut impl Write, m: &CenteredMatrix) -> Result<()> {
    for v in m.data() {
        put_f64(w, *v)?;
    }
    Ok(())
}

fn read_data(r: &mut impl Read, h: &Header) -> Result<CenteredMatrix> {
    let mut m = CenteredMatrix::zeros(h.order, h.len, h.sample_rate);
    for v in m.data_mut() {
        *v = get_f64(r)?;
    }
    Ok(m)
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(format_err("trailing bytes after matrix data")),
    }
}

pub fn write_gtvv_to(w: &mut impl Write, m: &CenteredMatrix) -> Result<()> {
    write_header(w, GTVV_MAGIC, m)?;
    write_data(w, m)
}

pub fn read_gtvv_from(r: &mut impl Read) -> Result<CenteredMatrix> {
    let h = read_header(r, GTVV_MAGIC)?;
    let m = read_data(r, &h)?;
    expect_eof(r)?;
    Ok(m)
}

pub fn write_rdir_to(w: &mut impl Write, h: &CenteredMatrix, filter: &ReferenceFilter) -> Result<()> {
    write_header(w, RDIR_MAGIC, h)?;
    put_u32(w, filter.taps().len() as u32)?;
    for &a in filter.taps() {
        put_f64(w, a)?;
    }
    write_data(w, h)
}

pub fn read_rdir_from(r: &mut impl Read) -> Result<(CenteredMatrix, ReferenceFilter)> {
    let h = read_header(r, RDIR_MAGIC)?;
    let ntaps = get_u32(r)? as usize;
    if ntaps == 0 || ntaps > h.len {
        return Err(format_err(format!("filter of {ntaps} taps does not fit the axis")));
    }
    let taps = (0..ntaps).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    let filter = ReferenceFilter::from_taps(taps).map_err(|e| format_err(e.to_string()))?;
    let m = read_data(r, &h)?;
    expect_eof(r)?;
    Ok((m, filter))
}

pub fn write_gtvv(path: &Path, m: &CenteredMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_gtvv_to(&mut w, m)?;
    Ok(w.flush()?)
}

pub fn read_gtvv(path: &Path) -> Result<CenteredMatrix> {
    read_gtvv_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_rdir(path: &Path, h: &CenteredMatrix, filter: &ReferenceFilter) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_rdir_to(&mut w, h, filter)?;
    Ok(w.flush()?)
}

pub fn read_rdir(path: &Path) -> Result<(CenteredMatrix, ReferenceFilter)> {
    read_rdir_from(&mut BufReader::new(File::open(path)?))
}

/// JSON written next to a GTVV container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtvvMetadata {
    pub beamformer: Beamformer,
    pub steering: Option<DirectionDeg>,
    pub buffers: usize,
    pub valid_fraction: f64,
    pub valid_mask: Vec<bool>,
    /// DoA read at each refinement iteration.
    pub doa_trace: Vec<DirectionDeg>,
    pub converged: bool,
}

/// `x.gtvv` → `x.gtvv.json`.
pub fn metadata_path(container: &Path) -> PathBuf {
    let mut s = container.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_metadata(container: &Path) -> Result<GtvvMetadata> {
    let text = std::fs::read_to_string(metadata_path(container))?;
    parse_json(&text, "GTVV metadata")
}

// ---------------------------------------------------------------- echoes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoRow {
    pub delay_samples: i64,
    pub delay_ms: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub gain: f64,
    pub correlation: f64,
}

impl EchoRow {
    pub fn new(e: &EchoEstimate, sample_rate: f64) -> Self {
        Self {
            delay_samples: e.delay,
            delay_ms: 1e3 * e.delay_seconds(sample_rate),
            azimuth_deg: e.direction.azimuth_deg(),
            elevation_deg: e.direction.elevation_deg(),
            gain: e.gain,
            correlation: e.correlation,
        }
    }

    /// Column-less estimate; delays are taken from `delay_samples`.
    pub fn to_estimate(&self) -> Result<EchoEstimate> {
        Ok(EchoEstimate {
            delay: self.delay_samples,
            direction: Direction::from_degrees(self.azimuth_deg, self.elevation_deg)
                .map_err(|e| format_err(e.to_string()))?,
            gain: self.gain,
            raw_column: Vec::new(),
            correlation: self.correlation,
        })
    }
}

/// JSON echo list; unlike the CSV it keeps the raw columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EchoFile {
    pub method: String,
    pub sample_rate: f64,
    pub echoes: Vec<EchoEstimate>,
}

pub fn write_echoes_csv(w: impl Write, echoes: &[EchoEstimate], sample_rate: f64) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for e in echoes {
        wr.serialize(EchoRow::new(e, sample_rate))
            .map_err(|e| format_err(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_echoes_csv(r: impl Read) -> Result<Vec<EchoEstimate>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<EchoRow>()
        .map(|row| row.map_err(|e| format_err(format!("echo CSV: {e}")))?.to_estimate())
        .collect()
}

/// Reads an echo list from `.csv` or `.json`.
pub fn read_echoes(path: &Path) -> Result<Vec<EchoEstimate>> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = std::fs::read_to_string(path)?;
        Ok(parse_json::<EchoFile>(&text, "echo file")?.echoes)
    } else {
        read_echoes_csv(BufReader::new(File::open(path)?))
    }
}

// ---------------------------------------------------------------- tables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scene: String,
    pub method: String,
    pub order: usize,
    /// Free-form recording condition, e.g. the SNR.
    pub condition: String,
    pub angular_error_deg: Option<f64>,
    pub median_angular_error_deg: Option<f64>,
    pub coherence: Option<f64>,
    pub detection_rate: f64,
    pub matched: usize,
    pub peaks: usize,
}

pub fn write_table(w: impl Write, rows: &[TableRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(|e| format_err(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ism::random_scene;
    use crate::ism::RandomSceneSpec;

    #[test]
    fn gtvv_roundtrip_and_corruption() {
        let mut m = CenteredMatrix::zeros(1, 8, 16000.0);
        m.set(0, 0, 1.0);
        m.set(3, -3, -0.25);
        m.set(2, 4, 1e-300);
        let mut buf = Vec::new();
        write_gtvv_to(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"GTVV");
        assert_eq!(buf.len(), 24 + 4 * 8 * 8);
        assert_eq!(read_gtvv_from(&mut buf.as_slice()).unwrap(), m);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_gtvv_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_gtvv_from(&mut &short[..]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_gtvv_from(&mut long.as_slice()).is_err());
        let mut v2 = buf;
        v2[4] = 2;
        assert!(read_gtvv_from(&mut v2.as_slice()).is_err());
    }

    #[test]
    fn rdir_roundtrip() {
        let mut h = CenteredMatrix::zeros(1, 16, 8000.0);
        h.set(0, 0, 1.0);
        h.set(1, 5, 0.5);
        let f = ReferenceFilter::from_tail(&[0.0, -0.5, 0.1]);
        let mut buf = Vec::new();
        write_rdir_to(&mut buf, &h, &f).unwrap();
        let (h2, f2) = read_rdir_from(&mut buf.as_slice()).unwrap();
        assert_eq!(h2, h);
        assert_eq!(f2, f);
        assert!(read_gtvv_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn scene_json_roundtrip() {
        let scene = random_scene(&RandomSceneSpec::default(), 4).unwrap();
        let f = SceneFile::from_scene(&scene);
        let text = serde_json::to_string(&f).unwrap();
        let back = parse_json::<SceneFile>(&text, "scene").unwrap().to_scene().unwrap();
        assert_eq!(back.wavefronts.len(), scene.wavefronts.len());
        for (a, b) in back.wavefronts.iter().zip(&scene.wavefronts) {
            assert_eq!(a.toa, b.toa);
            assert!(a.direction.angle_to_deg(&b.direction) < 1e-9);
        }
        let empty = r#"{"order": 1, "sample_rate": 16000, "wavefronts": []}"#;
        let r = parse_json::<SceneFile>(empty, "scene").unwrap().to_scene();
        assert!(matches!(r, Err(Error::Format(_))));
    }

    #[test]
    fn wav_roundtrip_with_sn3d() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let sig = AmbisonicSignal::new(
            1,
            16000.0,
            vec![vec![0.5, -0.25], vec![0.125, 0.0], vec![1.0, 0.5], vec![-1.0, 0.75]],
        )
        .unwrap();
        write_wav(&path, &sig, &Sidecar::n3d(1, 16000.0)).unwrap();
        let (back, side) = read_wav(&path).unwrap();
        assert_eq!(back, sig);
        assert_eq!(side.normalization, Normalization::N3d);

        let mut s = side;
        s.normalization = Normalization::Sn3d;
        write_json(&sidecar_path(&path), &s).unwrap();
        let (conv, _) = read_wav(&path).unwrap();
        assert_eq!(conv.channels[0], sig.channels[0]);
        assert!((conv.channels[1][0] - 0.125 * 3f64.sqrt()).abs() < 1e-7);

        std::fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Format(_))));
    }

    #[test]
    fn echo_csv_roundtrip() {
        let e = EchoEstimate {
            delay: 25,
            direction: Direction::from_degrees(30.0, -10.0).unwrap(),
            gain: 0.5,
            raw_column: vec![0.1; 4],
            correlation: 0.9,
        };
        let mut buf = Vec::new();
        write_echoes_csv(&mut buf, std::slice::from_ref(&e), 16000.0).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "delay_samples,delay_ms,azimuth_deg,elevation_deg,gain,correlation\n25,1.5625,"
        ));
        let back = read_echoes_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].delay, 25);
        assert!(back[0].direction.angle_to_deg(&e.direction) < 1e-9);
        assert!(back[0].raw_column.is_empty());
    }
}

//! C ABI over `ambi-echoes`.
//!
//! Every object crosses the boundary as an opaque handle that must be
//! released with its `_free` function. Functions return an [`AeStatus`];
//! on failure [`ae_last_error`] describes the problem until the next call on
//! the same thread. Matrices are copied out row-major, one row per ACN
//! channel, with column 0 at t = −len/2 + 1.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ambi_echoes::config::PipelineConfig;
use ambi_echoes::echoes::{extract_echoes, EchoEstimate, ExtractOptions};
use ambi_echoes::io::SceneFile;
use ambi_echoes::ism::{IsmScene, Wavefront};
use ambi_echoes::pipeline::{render_white, Analysis};
use ambi_echoes::rdrir::{self, Method, RdRirEstimate};
use ambi_echoes::sh::build_grid;
use ambi_echoes::{AmbisonicSignal, CenteredMatrix, Direction, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Format = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// RdRIR solver.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeMethod {
    Ac = 0,
    Cov = 1,
    Admm = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AeDirection {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AeEcho {
    /// Relative delay in samples.
    pub delay: i64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub gain: f64,
    pub correlation: f64,
}

/// Scene under construction; index 0 is the direct path.
pub struct AeScene {
    order: usize,
    sample_rate: f64,
    pulse_halfwidth: usize,
    wavefronts: Vec<Wavefront>,
}

pub struct AeSignal(AmbisonicSignal);

pub struct AeGtvv {
    matrix: CenteredMatrix,
    doa: Direction,
}

pub struct AeRdrir(RdRirEstimate);

pub struct AeEchoList(Vec<EchoEstimate>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AeStatus {
    match e {
        Error::Io(_) => AeStatus::Io,
        Error::Config(_) => AeStatus::Config,
        Error::Format(_) | Error::Json(_) | Error::Wav(_) => AeStatus::Format,
        e if e.is_numerical() => AeStatus::Numerical,
        _ => AeStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (AeStatus, String)>) -> AeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            AeStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AeStatus::Panic
        }
    }
}

fn lift(e: Error) -> (AeStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (AeStatus, String) {
    (AeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (AeStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (AeStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, (AeStatus, String)> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| (AeStatus::InvalidArgument, "string is not UTF-8".into()))
}

fn config_from(json: Option<&str>) -> Result<PipelineConfig, (AeStatus, String)> {
    json.map_or(Ok(PipelineConfig::default()), |j| {
        PipelineConfig::from_json(j).map_err(lift)
    })
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ae_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------- scenes

#[no_mangle]
pub unsafe extern "C" fn ae_scene_new(
    order: u32,
    sample_rate: f64,
    pulse_halfwidth: u32,
    out: *mut *mut AeScene,
) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if !(sample_rate > 0.0) || order > 10 {
            return Err((AeStatus::InvalidArgument, "bad order or sample rate".into()));
        }
        *out = Box::into_raw(Box::new(AeScene {
            order: order as usize,
            sample_rate,
            pulse_halfwidth: pulse_halfwidth as usize,
            wavefronts: Vec::new(),
        }));
        Ok(())
    })
}

/// Parses a scene file (angles in degrees).
#[no_mangle]
pub unsafe extern "C" fn ae_scene_from_json(json: *const c_char, out: *mut *mut AeScene) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let text = opt_str(json)?.ok_or_else(|| null("json"))?;
        let file: SceneFile = serde_json::from_str(text)
            .map_err(|e| (AeStatus::Format, format!("scene: {e}")))?;
        let s = file.to_scene().map_err(lift)?;
        *out = Box::into_raw(Box::new(AeScene {
            order: s.order,
            sample_rate: s.sample_rate,
            pulse_halfwidth: s.pulse_halfwidth,
            wavefronts: s.wavefronts,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_scene_add_wavefront(
    scene: *mut AeScene,
    toa_s: f64,
    gain: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
) -> AeStatus {
    guard(|| {
        let scene = out_ptr(scene, "scene")?;
        let d = Direction::from_degrees(azimuth_deg, elevation_deg).map_err(lift)?;
        scene.wavefronts.push(Wavefront::new(toa_s, gain, d));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_scene_free(scene: *mut AeScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

fn build_scene(s: &AeScene) -> Result<IsmScene, (AeStatus, String)> {
    IsmScene::new(s.wavefronts.clone(), s.order, s.sample_rate, s.pulse_halfwidth).map_err(lift)
}

// ---------------------------------------------------------------- signals

/// Renders the scene excited by white noise. Pass a NaN `snr_db` for a
/// noiseless recording.
#[no_mangle]
pub unsafe extern "C" fn ae_render_white(
    scene: *const AeScene,
    duration_s: f64,
    snr_db: f64,
    seed: u64,
    out: *mut *mut AeSignal,
) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let scene = build_scene(deref(scene, "scene")?)?;
        if !(duration_s > 0.0) {
            return Err((AeStatus::InvalidArgument, "duration must be positive".into()));
        }
        let snr = (!snr_db.is_nan()).then_some(snr_db);
        let r = render_white(&scene, duration_s, snr, seed).map_err(lift)?;
        *out = Box::into_raw(Box::new(AeSignal(r.signal)));
        Ok(())
    })
}

/// Wraps `frames` interleaved frames of `(order+1)²` N3D channels.
#[no_mangle]
pub unsafe extern "C" fn ae_signal_from_interleaved(
    order: u32,
    sample_rate: f64,
    data: *const f64,
    frames: usize,
    out: *mut *mut AeSignal,
) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let nch = ((order + 1) * (order + 1)) as usize;
        let samples = std::slice::from_raw_parts(data, frames * nch);
        let mut channels = vec![Vec::with_capacity(frames); nch];
        for frame in samples.chunks_exact(nch) {
            for (c, &v) in channels.iter_mut().zip(frame) {
                c.push(v);
            }
        }
        let s = AmbisonicSignal::new(order as usize, sample_rate, channels).map_err(lift)?;
        *out = Box::into_raw(Box::new(AeSignal(s)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_signal_dims(
    signal: *const AeSignal,
    channels: *mut usize,
    frames: *mut usize,
) -> AeStatus {
    guard(|| {
        let s = &deref(signal, "signal")?.0;
        *out_ptr(channels, "channels")? = s.num_channels();
        *out_ptr(frames, "frames")? = s.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_signal_free(signal: *mut AeSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

// ------------------------------------------------------------------ GTVV

/// Refines the DoA and estimates the GTVV with the refined reference.
/// `config_json` may be null for defaults; `doa` may be null.
#[no_mangle]
pub unsafe extern "C" fn ae_estimate_gtvv(
    signal: *const AeSignal,
    config_json: *const c_char,
    out: *mut *mut AeGtvv,
    doa: *mut AeDirection,
) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = &deref(signal, "signal")?.0;
        let cfg = config_from(opt_str(config_json)?)?;
        let a = Analysis::new(s, &cfg).map_err(lift)?;
        let d = a.doa.direction;
        if let Some(doa) = doa.as_mut() {
            *doa = AeDirection {
                azimuth_deg: d.azimuth_deg(),
                elevation_deg: d.elevation_deg(),
            };
        }
        *out = Box::into_raw(Box::new(AeGtvv {
            matrix: a.doa.estimate.matrix,
            doa: d,
        }));
        Ok(())
    })
}

unsafe fn matrix_dims(
    m: &CenteredMatrix,
    rows: *mut usize,
    len: *mut usize,
    sample_rate: *mut f64,
) -> Result<(), (AeStatus, String)> {
    *out_ptr(rows, "rows")? = m.rows();
    *out_ptr(len, "len")? = m.len();
    if let Some(fs) = sample_rate.as_mut() {
        *fs = m.sample_rate;
    }
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, cap: usize) -> Result<(), (AeStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if cap < src.len() {
        return Err((
            AeStatus::BufferTooSmall,
            format!("buffer holds {cap} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Row count `(L+1)²`, axis length and sample rate (which may be null).
#[no_mangle]
pub unsafe extern "C" fn ae_gtvv_dims(
    g: *const AeGtvv,
    rows: *mut usize,
    len: *mut usize,
    sample_rate: *mut f64,
) -> AeStatus {
    guard(|| matrix_dims(&deref(g, "gtvv")?.matrix, rows, len, sample_rate))
}

#[no_mangle]
pub unsafe extern "C" fn ae_gtvv_copy(g: *const AeGtvv, buf: *mut f64, cap: usize) -> AeStatus {
    guard(|| copy_out(deref(g, "gtvv")?.matrix.data(), buf, cap))
}

#[no_mangle]
pub unsafe extern "C" fn ae_gtvv_doa(g: *const AeGtvv, doa: *mut AeDirection) -> AeStatus {
    guard(|| {
        let d = deref(g, "gtvv")?.doa;
        *out_ptr(doa, "doa")? = AeDirection {
            azimuth_deg: d.azimuth_deg(),
            elevation_deg: d.elevation_deg(),
        };
        Ok(())
    })
}

/// Share of energy at negative lags.
#[no_mangle]
pub unsafe extern "C" fn ae_gtvv_acausal_fraction(g: *const AeGtvv, fraction: *mut f64) -> AeStatus {
    guard(|| {
        *out_ptr(fraction, "fraction")? = deref(g, "gtvv")?.matrix.acausal_energy_fraction();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_gtvv_free(g: *mut AeGtvv) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

// ----------------------------------------------------------------- RdRIR

/// Solves for the reference filter with window `j_max`. `config_json`
/// (nullable) supplies the ADMM settings.
#[no_mangle]
pub unsafe extern "C" fn ae_rdrir_solve(
    g: *const AeGtvv,
    j_max: usize,
    method: AeMethod,
    config_json: *const c_char,
    out: *mut *mut AeRdrir,
) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = &deref(g, "gtvv")?.matrix;
        let cfg = config_from(opt_str(config_json)?)?;
        let method = match method {
            AeMethod::Ac => Method::Ac,
            AeMethod::Cov => Method::Cov,
            AeMethod::Admm => Method::Admm,
        };
        let r = rdrir::solve(m, j_max, method, &cfg.admm_config()).map_err(lift)?;
        *out = Box::into_raw(Box::new(AeRdrir(r)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_rdrir_dims(
    r: *const AeRdrir,
    rows: *mut usize,
    len: *mut usize,
    sample_rate: *mut f64,
) -> AeStatus {
    guard(|| matrix_dims(&deref(r, "rdrir")?.0.h, rows, len, sample_rate))
}

#[no_mangle]
pub unsafe extern "C" fn ae_rdrir_copy(r: *const AeRdrir, buf: *mut f64, cap: usize) -> AeStatus {
    guard(|| copy_out(deref(r, "rdrir")?.0.h.data(), buf, cap))
}

/// Filter taps a[0..=j_max]; `count` receives the number written.
#[no_mangle]
pub unsafe extern "C" fn ae_rdrir_taps(
    r: *const AeRdrir,
    buf: *mut f64,
    cap: usize,
    count: *mut usize,
) -> AeStatus {
    guard(|| {
        let taps = deref(r, "rdrir")?.0.filter.taps();
        *out_ptr(count, "count")? = taps.len();
        copy_out(taps, buf, cap)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_rdrir_free(r: *mut AeRdrir) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

// ---------------------------------------------------------------- echoes

fn echo_list(
    m: &CenteredMatrix,
    peaks: usize,
    j_max: usize,
    grid_resolution_deg: f64,
) -> Result<AeEchoList, (AeStatus, String)> {
    let grid = build_grid(grid_resolution_deg, m.order).map_err(lift)?;
    let opts = ExtractOptions {
        peaks,
        j_max,
        ..ExtractOptions::default()
    };
    Ok(AeEchoList(extract_echoes(m, &grid, &opts, None).map_err(lift)?))
}

/// Echoes of the omni-style GTVV matrix (raw direction fit).
#[no_mangle]
pub unsafe extern "C" fn ae_gtvv_echoes(
    g: *const AeGtvv,
    peaks: usize,
    j_max: usize,
    grid_resolution_deg: f64,
    out: *mut *mut AeEchoList,
) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let l = echo_list(&deref(g, "gtvv")?.matrix, peaks, j_max, grid_resolution_deg)?;
        *out = Box::into_raw(Box::new(l));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_rdrir_echoes(
    r: *const AeRdrir,
    peaks: usize,
    grid_resolution_deg: f64,
    out: *mut *mut AeEchoList,
) -> AeStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let r = &deref(r, "rdrir")?.0;
        let l = echo_list(&r.h, peaks, r.j_max, grid_resolution_deg)?;
        *out = Box::into_raw(Box::new(l));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_echo_list_len(list: *const AeEchoList, len: *mut usize) -> AeStatus {
    guard(|| {
        *out_ptr(len, "len")? = deref(list, "list")?.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_echo_list_get(
    list: *const AeEchoList,
    index: usize,
    echo: *mut AeEcho,
) -> AeStatus {
    guard(|| {
        let l = &deref(list, "list")?.0;
        let e = l.get(index).ok_or_else(|| {
            (
                AeStatus::InvalidArgument,
                format!("index {index} out of range for {} echoes", l.len()),
            )
        })?;
        *out_ptr(echo, "echo")? = AeEcho {
            delay: e.delay,
            azimuth_deg: e.direction.azimuth_deg(),
            elevation_deg: e.direction.elevation_deg(),
            gain: e.gain,
            correlation: e.correlation,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ae_echo_list_free(list: *mut AeEchoList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

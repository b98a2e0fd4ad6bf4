use std::ffi::{CStr, CString};
use std::ptr;

use ambi_echoes_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ae_last_error()) }.to_string_lossy().into_owned()
}

fn two_wavefront_scene() -> *mut AeScene {
    let mut scene = ptr::null_mut();
    unsafe {
        assert_eq!(ae_scene_new(2, 16000.0, 8, &mut scene), AeStatus::Ok);
        assert_eq!(ae_scene_add_wavefront(scene, 0.005, 1.0, 30.0, 0.0), AeStatus::Ok);
        assert_eq!(ae_scene_add_wavefront(scene, 0.005 + 40.0 / 16000.0, 0.5, -90.0, 20.0), AeStatus::Ok);
    }
    scene
}

#[test]
fn end_to_end_through_handles() {
    unsafe {
        let scene = two_wavefront_scene();
        let mut sig = ptr::null_mut();
        assert_eq!(ae_render_white(scene, 4.0, f64::NAN, 3, &mut sig), AeStatus::Ok);
        let (mut ch, mut frames) = (0usize, 0usize);
        assert_eq!(ae_signal_dims(sig, &mut ch, &mut frames), AeStatus::Ok);
        assert_eq!(ch, 9);
        assert!(frames >= 64000);

        let mut g = ptr::null_mut();
        let mut doa = AeDirection::default();
        assert_eq!(ae_estimate_gtvv(sig, ptr::null(), &mut g, &mut doa), AeStatus::Ok, "{}", last_error());
        assert!((doa.azimuth_deg - 30.0).abs() < 4.0, "{doa:?}");

        let (mut rows, mut len, mut fs) = (0usize, 0usize, 0.0);
        assert_eq!(ae_gtvv_dims(g, &mut rows, &mut len, &mut fs), AeStatus::Ok);
        assert_eq!((rows, fs), (9, 16000.0));
        let mut small = vec![0.0; 3];
        assert_eq!(ae_gtvv_copy(g, small.as_mut_ptr(), small.len()), AeStatus::BufferTooSmall);
        assert!(last_error().contains("need"));
        let mut buf = vec![0.0; rows * len];
        assert_eq!(ae_gtvv_copy(g, buf.as_mut_ptr(), buf.len()), AeStatus::Ok);
        assert!(last_error().is_empty());
        // Channel 0 at t = 0 is the unit reference tap.
        let zero = len / 2 - 1;
        assert!(buf[zero] > 0.5);

        let mut r = ptr::null_mut();
        assert_eq!(ae_rdrir_solve(g, 200, AeMethod::Admm, ptr::null(), &mut r), AeStatus::Ok, "{}", last_error());
        let mut taps = vec![0.0; 201];
        let mut n = 0usize;
        assert_eq!(ae_rdrir_taps(r, taps.as_mut_ptr(), taps.len(), &mut n), AeStatus::Ok);
        assert_eq!((n, taps[0]), (201, 1.0));

        let mut list = ptr::null_mut();
        assert_eq!(ae_rdrir_echoes(r, 2, 2.0, &mut list), AeStatus::Ok);
        let mut count = 0usize;
        ae_echo_list_len(list, &mut count);
        assert_eq!(count, 2);
        let mut e = AeEcho::default();
        assert_eq!(ae_echo_list_get(list, 1, &mut e), AeStatus::Ok);
        assert!((e.delay - 40).abs() <= 1, "{e:?}");
        assert_eq!(ae_echo_list_get(list, 2, &mut e), AeStatus::InvalidArgument);

        ae_echo_list_free(list);
        ae_rdrir_free(r);
        ae_gtvv_free(g);
        ae_signal_free(sig);
        ae_scene_free(scene);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut scene = ptr::null_mut();
        assert_eq!(ae_scene_new(1, 16000.0, 8, ptr::null_mut()), AeStatus::NullPointer);
        assert_eq!(ae_scene_new(1, 16000.0, 8, &mut scene), AeStatus::Ok);
        let mut sig = ptr::null_mut();
        // No wavefronts yet.
        assert_eq!(ae_render_white(scene, 1.0, f64::NAN, 0, &mut sig), AeStatus::InvalidArgument);
        assert!(sig.is_null());
        assert!(!last_error().is_empty());

        let bad = CString::new("{\"order\": 1}").unwrap();
        let mut s2 = ptr::null_mut();
        assert_eq!(ae_scene_from_json(bad.as_ptr(), &mut s2), AeStatus::Format);

        let data = vec![0.0; 4 * 100];
        assert_eq!(ae_signal_from_interleaved(1, 16000.0, data.as_ptr(), 100, &mut sig), AeStatus::Ok);
        let cfg = CString::new("{\"peeks\": 3}").unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(ae_estimate_gtvv(sig, cfg.as_ptr(), &mut g, ptr::null_mut()), AeStatus::Config);
        // Shorter than one analysis window.
        assert_ne!(ae_estimate_gtvv(sig, ptr::null(), &mut g, ptr::null_mut()), AeStatus::Ok);
        assert!(g.is_null());

        ae_signal_free(sig);
        ae_scene_free(scene);
        ae_gtvv_free(ptr::null_mut());
    }
}

#[test]
fn scene_from_json() {
    let text = CString::new(
        r#"{"order": 1, "sample_rate": 8000, "wavefronts": [
            {"toa_s": 0.01, "gain": 1, "azimuth_deg": 0, "elevation_deg": 0}]}"#,
    )
    .unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(ae_scene_from_json(text.as_ptr(), &mut s), AeStatus::Ok);
        let mut sig = ptr::null_mut();
        assert_eq!(ae_render_white(s, 0.5, 20.0, 1, &mut sig), AeStatus::Ok);
        ae_signal_free(sig);
        ae_scene_free(s);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ambi_echoes.h")).unwrap();
    for name in [
        "ae_last_error",
        "ae_scene_new",
        "ae_render_white",
        "ae_estimate_gtvv",
        "ae_rdrir_solve",
        "ae_echo_list_get",
        "typedef struct AeGtvv AeGtvv",
        "AE_STATUS_NUMERICAL = 5",
    ] {
        assert!(header.contains(name), "{name} missing");
    }
    let version = unsafe { CStr::from_ptr(ae_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// The header compiles as C when a compiler is around.
#[test]
fn header_is_valid_c() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-I", dir, "-"])
        .stdin(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child.stdin.take().unwrap().write_all(b"#include \"ambi_echoes.h\"\nint main(void) { return AE_STATUS_OK; }\n")?;
            child.wait_with_output()
        })
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success());
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SCENE: &str = r#"{
  "order": 2,
  "sample_rate": 16000.0,
  "wavefronts": [
    {"toa_s": 0.0, "gain": 1.0, "azimuth_deg": 30.0, "elevation_deg": 0.0},
    {"toa_s": 0.005, "gain": 0.6, "azimuth_deg": 120.0, "elevation_deg": 10.0},
    {"toa_s": 0.011, "gain": 0.4, "azimuth_deg": -100.0, "elevation_deg": -20.0}
  ]
}"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ambi-echoes"))
        .args(args)
        .output()
        .expect("spawn ambi-echoes")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workdir {
    dir: tempfile::TempDir,
}

impl Workdir {
    fn new() -> Self {
        let w = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(w.path("scene.json"), SCENE).unwrap();
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn simulate(&self, name: &str, seed: &str) -> PathBuf {
        let wav = self.path(name);
        ok(&[
            "simulate",
            "--scene",
            s(&self.path("scene.json")),
            "--out",
            s(&wav),
            "--duration",
            "3",
            "--seed",
            seed,
        ]);
        wav
    }

    fn estimate(&self, wav: &Path, name: &str) -> PathBuf {
        let gtvv = self.path(name);
        ok(&["estimate", "--input", s(wav), "--out", s(&gtvv)]);
        gtvv
    }
}

fn extract(w: &Workdir, gtvv: &Path, method: &str, extra: &[&str]) -> PathBuf {
    let csv = w.path(&format!("{method}.csv"));
    let mut args = vec![
        "extract",
        "--gtvv",
        s(gtvv),
        "--echoes",
        s(&csv),
        "--method",
        method,
        "--peaks",
        "3",
        "--j-max-ms",
        "20",
    ];
    args.extend_from_slice(extra);
    ok(&args);
    csv
}

#[test]
fn simulate_estimate_extract_evaluate() {
    let w = Workdir::new();
    let wav = w.simulate("rec.wav", "7");
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(w.path("rec.json")).unwrap()).unwrap();
    assert_eq!(sidecar["order"], 2);
    assert!(sidecar["ground_truth"]["wavefronts"].is_array());

    let gtvv = w.estimate(&wav, "rec.gtvv");
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(w.path("rec.gtvv.json")).unwrap()).unwrap();
    assert!(meta["doa_trace"].as_array().is_some_and(|t| !t.is_empty()));

    let rdir = w.path("admm.rdir");
    let admm = extract(&w, &gtvv, "admm", &["--rdir", s(&rdir)]);
    assert!(rdir.exists());
    let ac = extract(&w, &gtvv, "ac", &[]);

    let report = w.path("report.json");
    ok(&[
        "evaluate",
        "--echoes",
        s(&admm),
        "--echoes",
        s(&ac),
        "--ground-truth",
        s(&w.path("rec.json")),
        "--peaks",
        "3",
        "--j-max-ms",
        "20",
        "--out",
        s(&report),
        "--table",
        s(&w.path("table.csv")),
    ]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert_eq!(r["detection_rate"], 1.0, "{r}");
        assert!(r["median_angular_error_deg"].as_f64().unwrap() < 5.0, "{r}");
    }
    let table = std::fs::read_to_string(w.path("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn same_seed_gives_identical_files() {
    let w = Workdir::new();
    let a = w.simulate("a.wav", "3");
    let b = w.simulate("b.wav", "3");
    let c = w.simulate("c.wav", "4");
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));

    let ga = w.estimate(&a, "a.gtvv");
    let gb = w.estimate(&b, "b.gtvv");
    assert_eq!(read(&ga), read(&gb));
}

#[test]
fn tdvv_and_zero_window() {
    let w = Workdir::new();
    let wav = w.simulate("rec.wav", "1");
    let gtvv = w.estimate(&wav, "rec.gtvv");

    let tdvv = extract(&w, &gtvv, "tdvv", &[]);
    let rows = std::fs::read_to_string(&tdvv).unwrap();
    assert!(rows.lines().count() > 1);

    // An RdRIR file only exists for the solver methods.
    let out = bin(&[
        "extract",
        "--gtvv",
        s(&gtvv),
        "--echoes",
        s(&w.path("x.csv")),
        "--method",
        "tdvv",
        "--rdir",
        s(&w.path("x.rdir")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    for method in ["ac", "admm", "gtvv"] {
        let csv = w.path(&format!("zero-{method}.csv"));
        ok(&[
            "extract",
            "--gtvv",
            s(&gtvv),
            "--echoes",
            s(&csv),
            "--method",
            method,
            "--j-max-ms",
            "0",
        ]);
        let text = std::fs::read_to_string(&csv).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 1, "{method}: {text}");
        assert!(rows[0].starts_with("0,"), "{method}: {text}");
    }
}

#[test]
fn exit_codes() {
    let w = Workdir::new();

    let out = bin(&["estimate", "--input", s(&w.path("missing.wav")), "--out", s(&w.path("x.gtvv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let empty = w.path("empty.json");
    std::fs::write(&empty, r#"{"order": 1, "sample_rate": 16000.0, "wavefronts": []}"#).unwrap();
    let out = bin(&["simulate", "--scene", s(&empty), "--out", s(&w.path("e.wav")), "--duration", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let wav = w.simulate("rec.wav", "1");
    std::fs::remove_file(w.path("rec.json")).unwrap();
    let out = bin(&["estimate", "--input", s(&wav), "--out", s(&w.path("x.gtvv"))]);
    assert_eq!(out.status.code(), Some(2));

    let bad = w.path("bad.gtvv");
    std::fs::write(&bad, b"not a gtvv").unwrap();
    let out = bin(&["extract", "--gtvv", s(&bad), "--echoes", s(&w.path("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = bin(&["simulate", "--scene", s(&w.path("scene.json")), "--out", s(&w.path("y.wav")), "--j-max-ms", "-5"]);
    assert_eq!(out.status.code(), Some(2));
}

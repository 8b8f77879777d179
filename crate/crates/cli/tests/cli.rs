use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tio")).args(args).env("TIO_THREADS", "1").output().expect("tio runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn synth(dir: &Path) -> PathBuf {
    let spec = fixture_dir().join("synth60.json");
    let out = dir.join("seq");
    let o = tio(&["synth", spec.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.json")
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = tio(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&tio(&[])), 1);
    assert_eq!(code(&tio(&["--help"])), 0);
}

#[test]
fn track_without_manifest_is_usage_error() {
    assert_eq!(code(&tio(&["track", "--out", "x.jsonl"])), 1);
}

#[test]
fn print_config_lists_defaults() {
    let o = tio(&["track", "--print-config"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["nms_iou = 0.5", "miss_tolerance = 0", "min_det_score = 0.1", "search_factor = 2.0", "template_update = \"every_frame\""] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}

#[test]
fn bad_config_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "nms_iou = 2.0\n").unwrap();
    assert_eq!(code(&tio(&["track", "--config", cfg.to_str().unwrap(), "--print-config"])), 2);
}

#[test]
fn track_fixture_then_self_eval() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let results = dir.path().join("results.jsonl");
    let o = tio(&["track", manifest.to_str().unwrap(), "--out", results.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let records = tio_core::io::load_results(&results).unwrap();
    assert_eq!(records.len(), 60);

    let o = tio(&["eval", "--pred", results.to_str().unwrap(), "--gt", results.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report = String::from_utf8(o.stdout).unwrap();
    for key in ["hand_ap", "hstate_ap", "hside_ap", "object_ap", "all_map"] {
        let line = report.lines().find(|l| l.starts_with(&format!("{key} "))).unwrap();
        assert!(line.starts_with(&format!("{key} 1.000000 ")), "{line}");
    }
}

#[test]
fn eval_against_annotations_with_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let results = dir.path().join("results.jsonl");
    assert_eq!(code(&tio(&["track", manifest.to_str().unwrap(), "--out", results.to_str().unwrap()])), 0);
    let gt = dir.path().join("seq/annotations.jsonl");
    let o = tio(&["eval", "--pred", results.to_str().unwrap(), "--gt", gt.to_str().unwrap(), "--per-scene", "--eleven-point"]);
    assert_eq!(code(&o), 0);
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("ap_variant 11_point"));
    assert!(report.contains("frames 30"));
    assert!(report.lines().any(|l| l.starts_with("scene.tabletop.all_map ")));
    assert!(report.lines().any(|l| l.starts_with("state_object_ap.portable ")));
}

#[test]
fn malformed_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let det = dir.path().join("seq/detections.jsonl");
    let mut text = std::fs::read_to_string(&det).unwrap();
    text.push_str("{\"frame\": \"x\"}\n");
    std::fs::write(&det, text).unwrap();
    let out = dir.path().join("r.jsonl");
    let o = tio(&["track", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 61"));

    let missing = dir.path().join("nope.jsonl");
    assert_eq!(code(&tio(&["eval", "--pred", missing.to_str().unwrap(), "--gt", missing.to_str().unwrap()])), 2);

    let bad_spec = dir.path().join("spec.json");
    std::fs::write(&bad_spec, r#"{"width": 10, "height": 10, "frames": 2, "seed": 1,
        "object": {"start": [8, 8, 4, 4], "velocity": [0, 0]}, "hand": {"start": [0, 0, 2, 2], "velocity": [0, 0]}}"#).unwrap();
    assert_eq!(code(&tio(&["synth", bad_spec.to_str().unwrap(), "--out-dir", dir.path().join("o").to_str().unwrap()])), 2);
}

#[test]
fn bench_prints_latency() {
    let o = tio(&["bench-xcorr", "--channels", "8", "--iters", "3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("depthwise_xcorr 30x30x8 * 15x15x8: mean "), "{text}");
    assert_eq!(code(&tio(&["bench-xcorr", "--iters", "0"])), 1);
}

#[test]
fn selftest_passes() {
    let o = tio(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().filter(|l| l.starts_with("PASS ")).count(), 10);
}

#[test]
fn learned_head_file_is_accepted() {
    use tio_core::siam::LearnedHead;
    use tio_core::tensor::ConvLayer;
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let c = 3;
    let layer = |out: usize| ConvLayer::new(out, 1, 1, c, vec![0.1; out * c], vec![0.0; out]).unwrap();
    let head = LearnedHead::new(vec![layer(2)], vec![layer(1)], vec![layer(4)]).unwrap();
    let path = dir.path().join("head.hd1");
    head.write_hd1(std::fs::File::create(&path).unwrap()).unwrap();
    let out = dir.path().join("r.jsonl");
    let o = tio(&["track", manifest.to_str().unwrap(), "--out", out.to_str().unwrap(), "--head", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&path, b"HD1\0garbage").unwrap();
    assert_eq!(code(&tio(&["track", manifest.to_str().unwrap(), "--out", out.to_str().unwrap(), "--head", path.to_str().unwrap()])), 2);
}

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crispedge")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    let o = run(&["synth", "-o", s(&corpus), "--count", "3", "--size", "48", "--labels", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    corpus.join("manifest.json")
}

#[test]
fn synth_refine_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("refined");
    let o = run(&["refine", s(&manifest), "-o", s(&out), "--parallelism", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.json").exists() && out.join("img000.png").exists());

    let o = run(&["eval", s(&manifest), "-o", s(&dir.path().join("ev")), "--nms", "--radius-px", "2"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ODS "));
}

#[test]
fn crispness_of_a_thin_map_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let image = manifest.parent().unwrap().join("img000.png");
    let edges = dir.path().join("edges.png");
    assert!(run(&["canny", s(&image), "-o", s(&edges), "--canny-sigmas", "1"]).status.success());
    let o = run(&["crispness", s(&edges)]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1");
}

#[test]
fn missing_input_exits_one() {
    let o = run(&["crispness", "/nonexistent/map.png"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: ") && err.contains("/nonexistent/map.png"));
    let o = run(&["refine", "/nonexistent/manifest.json", "-o", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_config_values_are_rejected() {
    let o = run(&["crispness", "/nonexistent.png", "--eta", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
}

#[test]
fn partial_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    m["entries"][1]["labels"][0] = "missing.png".into();
    std::fs::write(&manifest, m.to_string()).unwrap();
    let o = run(&["refine", s(&manifest), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("img001"));
}

#[test]
fn noise_study_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let o = run(&[
        "noise-study", "-o", s(&out), "--count", "2", "--size", "48", "--alphas", "0,10",
        "--mix-fractions", "0,1", "--annotators", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("alpha,label_ac"));
    for f in ["study.json", "noise.csv", "mix.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

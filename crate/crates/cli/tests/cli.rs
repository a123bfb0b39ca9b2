use std::path::PathBuf;
use std::process::{Command, Output};

fn dynprice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynprice")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dynprice-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_config_code() {
    assert_eq!(dynprice(&["sweep", "--kind", "nope", "--scale", "1"]).status.code(), Some(1));
    assert_eq!(dynprice(&["sweep", "--kind", "rho", "--scale", "3"]).status.code(), Some(1));
    assert_eq!(dynprice(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(dynprice(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_files_exit_with_config_code() {
    let dir = scratch("badcfg");
    let missing = dir.join("missing.json");
    assert_eq!(dynprice(&["run", "--config", s(&missing)]).status.code(), Some(1));
    let broken = dir.join("broken.json");
    std::fs::write(&broken, br#"{"scale": "scale2", "horizons": [], "reps": 1, "master_seed": 0, "policies": ["learning"]}"#).unwrap();
    let out = dynprice(&["run", "--config", s(&broken), "--out", s(&dir.join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn validate_passes() {
    let out = dynprice(&["validate"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn gen_instance_is_deterministic_and_parseable() {
    let dir = scratch("gen");
    let (a, b) = (dir.join("a.json"), dir.join("b.json"));
    for p in [&a, &b] {
        let out = dynprice(&["gen-instance", "--scale", "2", "--seed", "11", "--horizon", "300", "--out", s(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let inst = dynprice::model::parse_instance_json(&bytes).unwrap();
    assert_eq!(inst.horizon, 300);
}

#[test]
fn sweep_output_replays_from_its_manifest() {
    let dir = scratch("sweep");
    let first = dir.join("first");
    let out = dynprice(&[
        "sweep", "--kind", "rho", "--scale", "2", "--grid", "0,0.9", "--reps", "2", "--seed", "5", "--out", s(&first),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read(first.join("results.csv")).unwrap();
    assert_eq!(dynprice::experiments::read_csv(&csv).unwrap().len(), 4);

    let second = dir.join("second");
    let manifest = first.join("manifest.json");
    let out = dynprice(&["run", "--config", s(&manifest), "--out", s(&second), "--workers", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv, std::fs::read(second.join("results.csv")).unwrap());
}

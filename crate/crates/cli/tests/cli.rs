use std::path::Path;
use std::process::Command;

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_overshoot-lab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn list_prints_the_catalog() {
    let out = lab().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "stationarity",
        "reversal",
        "q-balance",
        "drift",
        "crossings-growth",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
    assert_eq!(text.lines().count(), 16);
}

#[test]
fn unknown_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "no-such-thing"}"#);
    let out = lab().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        r#"{"experiment": "cycle", "replicas": -3}"#,
        r#"{"experiment": "cycle", "colour": 1}"#,
        "not json",
    ] {
        let cfg = write_config(dir.path(), body);
        let out = lab().args(["run", "--config"]).arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{body}");
    }
    let out = lab()
        .args(["run", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn guard_exhaustion_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"experiment": "drift", "replicas": 50, "probes": [100, 1000], "guard": 10, "guard_policy": "error"}"#,
    );
    let out = lab().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exact_experiment_passes_and_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "q-balance"}"#);
    let out_dir = dir.path().join("out");
    let out = lab()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("results.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["experiment"], "q-balance");
    assert!(out_dir.join("q_kernel.csv").exists());
}

#[test]
fn failing_criterion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // 200 replicas cannot resolve a TV of 1e-6.
    let cfg = write_config(
        dir.path(),
        r#"{"experiment": "cycle", "replicas": 200, "thresholds": {"tv_max": 1e-6}}"#,
    );
    let out = lab().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"experiment": "undershoot", "replicas": 2000, "seed": 7}"#,
    );
    let run = |sub: &str, threads: &str, seed: &str| {
        let o = dir.path().join(sub);
        lab()
            .env("OVERSHOOT_LAB_THREADS", threads)
            .args(["run", "--seed", seed, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&o)
            .output()
            .unwrap();
        std::fs::read(o.join("results.json")).unwrap()
    };
    let a = run("a", "1", "7");
    assert_eq!(a, run("b", "2", "7"));
    assert_ne!(a, run("c", "1", "8"));
}

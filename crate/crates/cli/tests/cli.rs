use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mumab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mumab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const SMALL: &str = r#"{
    "system": {"k": 2, "m": 3},
    "rewards": {"matrix": [[0.9, 0.5, 0.2], [0.6, 0.8, 0.3]]},
    "horizon": {"epochs": 5},
    "output": {"plot": "plot.svg"}
}"#;

#[test]
fn oracle_reports_the_gap() {
    let out = mumab(&["oracle", arg(&configs().join("two_users_matrix.json"))]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["j1"].as_f64().unwrap() - 1.7).abs() < 1e-12);
    assert!((v["j2"].as_f64().unwrap() - 1.2).abs() < 1e-12);
    assert!((v["delta"].as_f64().unwrap() - 0.5 / 6.0).abs() < 1e-12);
    assert_eq!(v["optimal_set"], serde_json::json!([[1, 2]]));

    let out = mumab(&["oracle", arg(&configs().join("multi_optimum_matrix.json"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["optimal_set"], serde_json::json!([[1, 3], [2, 3]]));

    let out = mumab(&["oracle", "--config", arg(&configs().join("two_users.json"))]);
    assert!(out.status.success());
}

#[test]
fn oracle_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let flat = write(
        dir.path(),
        "flat.json",
        r#"{"k": 2, "m": 2, "values": [0.4, 0.4, 0.4, 0.4]}"#,
    );
    let out = mumab(&["oracle", arg(&flat)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate matrix"));

    assert_eq!(
        mumab(&["oracle", arg(&dir.path().join("missing.json"))])
            .status
            .code(),
        Some(4)
    );
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"k": 2, "m": 2, "values": [0.4, 1.4, 0.4, 0.4]}"#,
    );
    assert_eq!(mumab(&["oracle", arg(&bad)]).status.code(), Some(2));
    let junk = write(dir.path(), "junk.json", "{");
    assert_eq!(mumab(&["oracle", arg(&junk)]).status.code(), Some(2));
    assert_eq!(mumab(&["oracle"]).status.code(), Some(2));
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let od = dir.path().join(sub);
        let out = mumab(&[
            "run",
            "--config",
            arg(&cfg),
            "--seed",
            "7",
            "--out-dir",
            arg(&od),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push((
            fs::read(od.join("trace.csv")).unwrap(),
            fs::read(od.join("summary.json")).unwrap(),
            fs::read(od.join("plot.svg")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let trace = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(
        trace.lines().next(),
        Some("t,epoch,phase,instant_regret,cum_regret,collisions")
    );
}

#[test]
fn point_mass_run_exploits_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = mumab(&[
        "run",
        "--config",
        arg(&configs().join("two_users.json")),
        "--seed",
        "3",
        "--out-dir",
        arg(dir.path()),
    ]);
    assert!(out.status.success());
    let s = json(&dir.path().join("summary.json"));
    let lf = s["global_fix_epoch"].as_u64().unwrap();
    let epochs = s["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 6);
    for e in epochs.iter().filter(|e| e["epoch"].as_u64().unwrap() >= lf) {
        assert_eq!(e["matching_optimal"], Value::Bool(true));
        assert_eq!(e["exploit_regret"].as_f64(), Some(0.0));
    }
    let r = &s["regret"];
    let parts: f64 = ["exploration", "matching", "exploitation"]
        .iter()
        .map(|k| r[k].as_f64().unwrap())
        .sum();
    assert!((parts - r["total"].as_f64().unwrap()).abs() < 1e-6);
    assert_eq!(s["fault_detected"], Value::Bool(false));
    assert_eq!(
        s["config"]["rewards"]["matrix"],
        serde_json::json!([[0.9, 0.5, 0.2], [0.6, 0.8, 0.3]])
    );
}

#[test]
fn summary_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("ten_users_random.json");
    let a = dir.path().join("a");
    let run = |cfg: &Path, od: &Path| {
        let out = mumab(&[
            "run",
            "--config",
            arg(cfg),
            "--seed",
            "2",
            "--out-dir",
            arg(od),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let small = write(
        dir.path(),
        "small.json",
        &fs::read_to_string(&cfg)
            .unwrap()
            .replace("\"epochs\": 6", "\"steps\": 3000"),
    );
    run(&small, &a);
    let echoed = json(&a.join("summary.json"))["config"].clone();
    let replay = write(dir.path(), "replay.json", &echoed.to_string());
    let b = dir.path().join("b");
    run(&replay, &b);
    assert_eq!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(b.join("trace.csv")).unwrap()
    );
}

#[test]
fn zero_atoms_are_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &SMALL.replace("]]}", "]], \"distribution\": {\"kind\": \"bernoulli\"}}"),
    );
    let out = mumab(&["run", "--config", arg(&cfg), "--out-dir", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("allow_zero_atom"));

    let out = mumab(&[
        "run",
        "--config",
        arg(&cfg),
        "--out-dir",
        arg(dir.path()),
        "--allow-zero-atom",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&dir.path().join("summary.json"));
    assert!(!s["warnings"].as_array().unwrap().is_empty());
    assert_eq!(
        s["fault_detected"].as_bool(),
        Some(s["fault_count"].as_u64().unwrap() > 0)
    );
}

#[test]
fn one_seed_sweep_equals_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let od = arg(dir.path());
    assert!(
        mumab(&["run", "--config", arg(&cfg), "--seed", "5", "--out-dir", od])
            .status
            .success()
    );
    assert!(mumab(&[
        "sweep",
        "--config",
        arg(&cfg),
        "--seed-list",
        "5",
        "--out-dir",
        od
    ])
    .status
    .success());
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let cum: Vec<&str> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap())
        .collect();
    let mean: Vec<&str> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(cum, mean);
    assert!(curve.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn sweep_summary_and_parallel_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let mut bytes = Vec::new();
    for threads in ["1", "3"] {
        let od = dir.path().join(threads);
        let out = Command::new(env!("CARGO_BIN_EXE_mumab"))
            .args([
                "sweep",
                "--config",
                arg(&cfg),
                "--seeds",
                "8",
                "--out-dir",
                arg(&od),
            ])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        bytes.push((
            fs::read(od.join("curve.csv")).unwrap(),
            fs::read(od.join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
    let s = json(&dir.path().join("1/summary.json"));
    assert_eq!(s["seeds"].as_array().unwrap().len(), 8);
    assert_eq!(
        s["config"]["sweep"]["seed_list"].as_array().unwrap().len(),
        8
    );
    let epochs = s["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 5);
    assert!(epochs
        .iter()
        .all(|e| e["bound"].as_f64().unwrap() > e["mean_regret"].as_f64().unwrap()));
    assert!(s["log_shape"].is_object());
    assert!(s["fixing"]["success_rate"].as_f64().is_some());
    assert_eq!(s["bound_dominates_every_run"], Value::Bool(true));
}

#[test]
fn plot_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let od = arg(dir.path());
    assert!(mumab(&[
        "sweep",
        "--config",
        arg(&cfg),
        "--seeds",
        "3",
        "--out-dir",
        od
    ])
    .status
    .success());
    let curve = dir.path().join("curve.csv");
    let svg = dir.path().join("out.svg");
    let out = mumab(&[
        "plot",
        arg(&curve),
        "--out",
        arg(&svg),
        "--summary",
        arg(&dir.path().join("summary.json")),
        "--overlay-bound",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["monotone"], Value::Bool(true));
    assert_eq!(report["bound_above_curve"], Value::Bool(true));
    let text = fs::read_to_string(&svg).unwrap();
    assert!(
        text.starts_with("<svg")
            && text.contains("cumulative regret")
            && text.contains("log-x view")
    );

    let empty = write(dir.path(), "empty.csv", "t,mean,stderr\n");
    assert_eq!(mumab(&["plot", arg(&empty)]).status.code(), Some(2));
    let blank = write(dir.path(), "blank.csv", "");
    assert_eq!(mumab(&["plot", arg(&blank)]).status.code(), Some(2));
    assert_eq!(
        mumab(&["plot", arg(&dir.path().join("nope.csv"))])
            .status
            .code(),
        Some(4)
    );
    // the bound needs parameters
    assert_eq!(
        mumab(&["plot", arg(&curve), "--overlay-bound"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn validate_config() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.json", SMALL);
    let out = mumab(&["validate-config", "--config", arg(&good)]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["protocol"]["rounds"].as_u64(), Some(3));
    assert_eq!(v["protocol"]["delta"], Value::String("oracle".into()));

    let unknown = write(
        dir.path(),
        "bad.json",
        &SMALL.replace("\"horizon\"", "\"horizn\""),
    );
    assert_eq!(
        mumab(&["validate-config", "--config", arg(&unknown)])
            .status
            .code(),
        Some(2)
    );
    let degenerate = write(
        dir.path(),
        "deg.json",
        &SMALL.replace(
            "[[0.9, 0.5, 0.2], [0.6, 0.8, 0.3]]",
            "[[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]]",
        ),
    );
    assert_eq!(
        mumab(&["validate-config", "--config", arg(&degenerate)])
            .status
            .code(),
        Some(3)
    );

    for name in [
        "two_users.json",
        "multi_optimum.json",
        "ten_users.json",
        "ten_users_random.json",
    ] {
        let out = mumab(&["validate-config", "--config", arg(&configs().join(name))]);
        assert!(out.status.success(), "{name}");
    }
}

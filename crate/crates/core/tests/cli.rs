use std::path::Path;
use std::process::{Command, Output};

fn sketchls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchls")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("prob.csv");
    ok(&sketchls(&["generate", "--rows", "200", "--cols", "6", "--condition", "100", "--seed", "3", "--out", path(&csv)]));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 200);
    assert!(text.lines().all(|l| l.split(',').count() == 7));

    let out = ok(&sketchls(&["solve", "--input", path(&csv), "--method", "rpc", "--sketch", "ros", "--m", "60", "--seed", "5"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["sketch"]["kind"], "ros");
    assert_eq!(v["sketch"]["m"], 60);
    assert_eq!(v["sketch"]["M"], 200);
    assert!(v["report"]["relative_accuracy"].as_f64().unwrap() >= 0.0);

    let ols = ok(&sketchls(&["solve", "--input", path(&csv), "--method", "ols"]));
    let v: serde_json::Value = serde_json::from_str(&ols).unwrap();
    assert!(v["report"]["relative_accuracy"].as_f64().unwrap() < 1e-8);
    assert!(v["sketch"].is_null());
}

#[test]
fn solve_rejects_missing_m_and_bad_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "1,2,3\n4,5\n").unwrap();
    let out = sketchls(&["solve", "--input", path(&csv), "--method", "ols"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    std::fs::write(&csv, "1,2\n3,4\n5,7\n").unwrap();
    let out = sketchls(&["solve", "--input", path(&csv), "--method", "pcls"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--m"));
}

#[test]
fn bench_profile_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let records = dir.path().join("out.jsonl");
    std::fs::write(
        &cfg,
        r#"{"source": {"synthetic": {"rows": 300, "cols": 8, "condition": 1000.0, "coherence": "incoherent"}},
            "methods": ["ols", "pcls"], "sketch_kinds": ["gaussian"], "m_values": [40], "trials": 2}"#,
    )
    .unwrap();
    ok(&sketchls(&[
        "bench", "--config", path(&cfg), "--out", path(&records), "--method", "pcls", "--method", "rpc",
        "--sketch", "count", "--m", "50", "--m", "80", "--rho", "0.5",
    ]));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&records)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // 2 methods × 1 kind × 2 sizes × 2 trials
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|r| r["sketch"]["kind"] == "count" && r["error"].is_null()));

    let profile = ok(&sketchls(&["profile", "--input", path(&records), "--group-by", "method,m"]));
    let mut rows = profile.lines();
    assert_eq!(rows.next(), Some("group,fraction,value"));
    assert_eq!(rows.filter(|l| l.starts_with("rpc/m=80,")).count(), 2);

    let timing = ok(&sketchls(&["timing", "--input", path(&records)]));
    let t: Vec<&str> = timing.lines().collect();
    assert_eq!(t[0], "method,count,sketch,factor,solve,total");
    assert!(t[1].starts_with("pcls,4,") && t[2].starts_with("rpc,4,"));
}

#[test]
fn profile_from_values() {
    let out = ok(&sketchls(&["profile", "--values", "1.04,1.00,1.02"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3], "values,1,1.04");
}

use std::path::Path;
use std::process::Command;

use searchassist_cli::config::RunConfig;
use searchassist_cli::metrics::read_metrics;
use searchassist_core::synth::{calibration_key, calibration_log_rows, CALIBRATION_TARGETS};
use searchassist_core::usersim::ConditionalTable;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_searchassist"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_rows(path: &Path, rows: &[searchassist_core::usersim::SessionLogRow]) {
    let text: String = rows.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["--version"]).0, 0);
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["fly"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--gamma", "1.5", "--out", p(&out)]).0, 1);
    assert_eq!(run(&["train", "--catalog", "/no/such.jsonl", "--out", p(&out)]).0, 2);

    let logs = dir.path().join("bad.jsonl");
    std::fs::write(&logs, "{not json}\n").unwrap();
    let (code, _, err) = run(&["ingest", "--logs", p(&logs), "--out", p(&dir.path().join("um.json"))]);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");

    std::fs::write(&logs, "").unwrap();
    let (code, _, err) = run(&["ingest", "--logs", p(&logs), "--out", p(&dir.path().join("um.json"))]);
    assert_eq!(code, 2);
    assert!(err.contains("no sessions"));
}

#[test]
fn ingest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs.jsonl");
    assert_eq!(run(&["synth-logs", "--sessions", "300", "--seed", "4", "--out", p(&logs)]).0, 0);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let (code, first, _) = run(&["ingest", "--logs", p(&logs), "--out", p(&a)]);
    assert_eq!(code, 0);
    let (_, second, _) = run(&["ingest", "--logs", p(&logs), "--out", p(&b)]);
    assert_eq!(first, second);
    assert!(first.contains("sequences 300"), "{first}");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn ingest_recovers_calibration_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("cal.jsonl");
    write_rows(&logs, &calibration_log_rows());
    let out = dir.path().join("um.json");
    assert_eq!(run(&["ingest", "--logs", p(&logs), "--out", p(&out)]).0, 0);
    let table = ConditionalTable::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for t in &CALIBRATION_TARGETS {
        let dist = table.get(&calibration_key(t)).unwrap();
        assert!((dist[t.next.index()] - t.probability).abs() < 1e-9, "{t:?}: {dist:?}");
    }
}

#[test]
fn single_worker_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec!["train", "--algo", "a3c", "--workers", "1", "--lstm", "8", "--episodes", "6", "--seed", "7", "--out"]
            .into_iter()
            .map(String::from)
            .chain([out.to_string()])
            .collect::<Vec<_>>()
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let out = bin().args(args(p(out))).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv_a = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert!(csv_a.starts_with("# searchassist-metrics v1\n"));
    assert_eq!(read_metrics(&a.join("metrics.csv")).unwrap().len(), 6);
    assert_eq!(
        std::fs::read(a.join("checkpoint/params.bin")).unwrap(),
        std::fs::read(b.join("checkpoint/params.bin")).unwrap()
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 5, "q": {"alpha": 0.3, "gamma": 0.5}}"#).unwrap();
    let out = dir.path().join("q");
    let (code, stdout, err) =
        run(&["train", "--algo", "q", "--config", p(&cfg), "--gamma", "0.6", "--episodes", "15", "--out", p(&out)]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("seed 5"));
    let resolved: RunConfig = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!((resolved.seed, resolved.q.alpha, resolved.q.gamma, resolved.q_episodes), (5, 0.3, 0.6, 15));
    assert_eq!(read_metrics(&out.join("metrics.csv")).unwrap().len(), 15);

    let (code, stdout, _) =
        run(&["validate", "--algo", "q", "--checkpoint", p(&out), "--validation-episodes-total", "10"]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["episodes"], 10);
    assert!(report["mean_reward"].as_f64().unwrap().is_finite());
}

#[test]
fn sweep_writes_cells_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let (code, _, err) = run(&[
        "sweep",
        "--gammas",
        "0.6,0.9",
        "--lstm-sizes",
        "4",
        "--encodings",
        "full,no-history",
        "--seeds",
        "1",
        "--workers",
        "1",
        "--episodes",
        "3",
        "--warmup",
        "1",
        "--sequential",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let summary = searchassist_cli::metrics::read_summary(&out.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 4);
    assert!(summary.iter().all(|r| r.count == 2));
    assert!(out.join("cell-g0.60-h4-no_history-s1.csv").exists());
}

#[test]
fn serve_rejects_hidden_size_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--workers", "1", "--lstm", "6", "--episodes", "2", "--out", p(&out)]).0, 0);
    let (code, _, err) = run(&["serve", "--checkpoint", p(&out), "--lstm", "12", "--port", "0"]);
    assert_eq!(code, 2);
    assert!(err.contains("hidden size"), "{err}");
    assert_eq!(run(&["serve", "--checkpoint", p(&dir.path().join("none"))]).0, 2);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

fn python3() -> bool {
    Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

fn scripted(extra: &[&str]) -> String {
    let f = fixtures();
    let mut dirs = vec![f.join("case_studies"), f.join("checks"), f.join("scripts")];
    dirs.extend(extra.iter().map(|d| f.join(d)));
    let dirs: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
    format!("scripted:{}", dirs.join(","))
}

fn nl2rl(runs: &Path, args: &[&str]) -> Output {
    let shim = format!("python3 {}", fixtures().join("shim/stub_shim.py").display());
    Command::new(env!("CARGO_BIN_EXE_nl2rl"))
        .arg("--runs-dir")
        .arg(runs)
        .arg("--shim")
        .arg(shim)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn only_run(runs: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(runs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("record.json").exists())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn replay_of_golden_fixture_succeeds() {
    if !python3() {
        return;
    }
    let runs = tempfile::tempdir().unwrap();
    let golden = fixtures().join("golden/wireless");
    let out = nl2rl(runs.path(), &["replay", golden.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        stdout(&out).contains("M=true C=true P=true"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn unknown_task_exits_3() {
    let runs = tempfile::tempdir().unwrap();
    let out = nl2rl(
        runs.path(),
        &["run", "no-such-task", "--backend", &scripted(&[])],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_backend_selector_is_a_usage_error() {
    let runs = tempfile::tempdir().unwrap();
    let out = nl2rl(
        runs.path(),
        &["run", "cart-pole", "--backend", "carrier-pigeon"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_reports_and_report_is_idempotent() {
    if !python3() {
        return;
    }
    let runs = tempfile::tempdir().unwrap();
    let bench_out = runs.path().join("bench");
    let out = nl2rl(
        runs.path(),
        &[
            "bench",
            "--tasks",
            "cart-pole,inventory",
            "--trials",
            "2",
            "--parallelism",
            "2",
            "--backend",
            &scripted(&[]),
            "--out",
            bench_out.to_str().unwrap(),
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["report.md", "report.csv", "outcomes.json"] {
        assert!(bench_out.join(f).exists(), "missing {f}");
    }
    let md = std::fs::read_to_string(bench_out.join("report.md")).unwrap();
    assert!(md.contains("1.00 / 1.00 / 1.00"), "{md}");

    let a = runs.path().join("report-a");
    let b = runs.path().join("report-b");
    for dir in [&a, &b] {
        let out = nl2rl(
            runs.path(),
            &[
                "report",
                runs.path().to_str().unwrap(),
                "--label",
                "bench",
                "--out",
                dir.to_str().unwrap(),
            ],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in ["report.md", "report.csv"] {
        let first = std::fs::read(a.join(f)).unwrap();
        assert_eq!(first, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(first, std::fs::read(bench_out.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn inspect_validate_round_trips_stored_artifacts() {
    if !python3() {
        return;
    }
    let runs = tempfile::tempdir().unwrap();
    let out = nl2rl(
        runs.path(),
        &["run", "drone-delivery", "--backend", &scripted(&[])],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = only_run(runs.path());
    let out = nl2rl(
        runs.path(),
        &["inspect", run.to_str().unwrap(), "--validate"],
    );
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["violations"], serde_json::json!([]));
    assert!(!report["warnings"].as_array().unwrap().is_empty());

    let out = nl2rl(
        runs.path(),
        &["inspect", run.to_str().unwrap(), "--stage", "sar"],
    );
    let sar: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(sar["STATE"]["SHAPE"], "[1 + 2 + n + n]");
}

#[test]
fn clarification_parks_and_resumes() {
    if !python3() {
        return;
    }
    let runs = tempfile::tempdir().unwrap();
    let backend = scripted(&["clarify"]);
    let out = nl2rl(
        runs.path(),
        &[
            "run",
            "wireless",
            "--backend",
            &backend,
            "--clarifier",
            "park",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(stdout(&out).contains("bandwidth"), "{}", stdout(&out));
    let run = only_run(runs.path());
    let run = run.to_str().unwrap();

    let out = nl2rl(runs.path(), &["clarify", run, "--answer", "  "]);
    assert_eq!(out.status.code(), Some(2));

    let out = nl2rl(
        runs.path(),
        &["clarify", run, "--answer", "5 MHz and 200 mW"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        stdout(&out).contains("M=true C=true P=true"),
        "{}",
        stdout(&out)
    );

    let out = nl2rl(runs.path(), &["clarify", run, "--answer", "again"]);
    assert_eq!(out.status.code(), Some(5));
}

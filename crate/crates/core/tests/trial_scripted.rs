mod support;

use std::path::Path;

use nl2rl_core::codegen::OutcomeKind;
use nl2rl_core::config::Config;
use nl2rl_core::pipeline::ParkHandler;
use nl2rl_core::record::{RunDir, RunStatus};
use nl2rl_core::tasks;
use nl2rl_core::trial::{backend_for, run_trial, TrialContext};
use support::{fixtures, python3, stub_shim};

fn scripted_selector() -> String {
    let f = fixtures();
    format!(
        "scripted:{},{},{}",
        f.join("case_studies").display(),
        f.join("checks").display(),
        f.join("scripts").display()
    )
}

fn config() -> Config {
    let mut c = Config::default();
    c.codegen.shim = stub_shim();
    c.codegen.limits.timeout_secs = 60.0;
    c
}

fn run(task: &str, runs: &Path) -> nl2rl_core::trial::TrialReport {
    let config = config();
    let backend = backend_for(&scripted_selector(), &config, task, 0).unwrap();
    let ctx = TrialContext {
        config: &config,
        backend,
        clarifier: &ParkHandler,
        recorder: None,
        runs_root: runs.to_path_buf(),
        selector: None,
    };
    run_trial(&ctx, &tasks::resolve(task).unwrap(), None).unwrap()
}

#[test]
fn scripted_trials_succeed_on_all_criteria() {
    if !python3() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let runs = tempfile::tempdir().unwrap();
    for task in support::TASKS {
        let report = run(task, runs.path());
        let o = &report.outcome;
        assert_eq!(report.status, RunStatus::Finished, "{task}");
        assert!(o.m && o.c && o.p && o.c_strict, "{task}: {:#?}", o.evidence);
    }
}

#[test]
fn run_directory_layout() {
    if !python3() {
        return;
    }
    let runs = tempfile::tempdir().unwrap();
    let report = run("mountain-car", runs.path());
    let dir = &report.run_dir;
    for file in [
        "record.json",
        "parameter.json",
        "env.json",
        "transcript.json",
        "coding.json",
        "code/main.py",
        "results/results.json",
        "outcome.json",
        "exec/attempt-1/code/main.py",
        "exec/attempt-2/results/results.json",
    ] {
        assert!(dir.join(file).exists(), "missing {file}");
    }
    let record = RunDir::open(dir).unwrap().load_record().unwrap();
    // the first scripted reply has a NameError; the repair attempt fixes it
    let kinds: Vec<OutcomeKind> = record.executions.iter().map(|a| a.outcome.kind).collect();
    assert_eq!(kinds, [OutcomeKind::RuntimeError, OutcomeKind::Success]);
    assert_eq!(record.counters["coding"], 2);
    assert_eq!(record.counters["parameter_check"], 1);
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nl2rl_core::ir::{parse_structured_block, MdpIr};
use nl2rl_core::pipeline::{apply_payload, ir_stages};
use nl2rl_core::stage::StageId;

pub const TASKS: [&str; 5] = [
    "cart-pole",
    "mountain-car",
    "wireless",
    "drone-delivery",
    "inventory",
];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn case_study_dir(task: &str) -> PathBuf {
    fixtures().join("case_studies").join(task)
}

/// Raw stage replies of a case study, in stage order.
pub fn case_study_replies(dir: &Path) -> Vec<(StageId, String)> {
    ir_stages()
        .map(|s| {
            let path = dir.join(format!("{s}.txt"));
            let text = std::fs::read_to_string(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            (s, text)
        })
        .collect()
}

/// Parses every reply and folds it into an IR, the way accepted stage
/// outputs are folded during a run.
pub fn ir_from_replies(replies: &[(StageId, String)]) -> Result<MdpIr, String> {
    let mut ir = MdpIr::default();
    for (stage, text) in replies {
        let kind = stage.payload_kind().expect("IR stage");
        let parsed = parse_structured_block(text, kind).map_err(|e| format!("{stage}: {e}"))?;
        apply_payload(&mut ir, *stage, parsed.value).map_err(|e| format!("{stage}: {e}"))?;
    }
    Ok(ir)
}

pub fn load_case_study(task: &str) -> MdpIr {
    ir_from_replies(&case_study_replies(&case_study_dir(task))).unwrap()
}

pub fn python3() -> bool {
    std::process::Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

pub fn stub_shim() -> Vec<String> {
    vec![
        "python3".into(),
        fixtures().join("shim/stub_shim.py").display().to_string(),
    ]
}

#[derive(serde::Deserialize)]
pub struct FaultSpec {
    pub task: String,
    /// Stage expected to give up.
    pub stage: StageId,
    /// Violation kind, or `parse`.
    pub expect: String,
}

pub fn fault_dirs() -> Vec<PathBuf> {
    let mut dirs: Vec<_> = std::fs::read_dir(fixtures().join("faults"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("fault.json").exists())
        .collect();
    dirs.sort();
    dirs
}

/// Runs the case study with the fault's replies swapped in. Ok when the
/// expected stage gives up with the expected fault and M is false.
pub fn check_fault(dir: &Path, runs: &Path) -> Result<(), String> {
    use nl2rl_core::config::Config;
    use nl2rl_core::pipeline::{ParkHandler, StageStatus};
    use nl2rl_core::record::RunDir;
    use nl2rl_core::tasks;
    use nl2rl_core::trial::{backend_for, run_trial, TrialContext};

    let name = dir.file_name().unwrap().to_string_lossy().to_string();
    let text = std::fs::read_to_string(dir.join("fault.json")).map_err(|e| e.to_string())?;
    let spec: FaultSpec = serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))?;
    let f = fixtures();
    let selector = format!(
        "scripted:{},{},{}",
        case_study_dir(&spec.task).display(),
        f.join("checks").display(),
        dir.display()
    );
    let config = Config::default();
    let backend = backend_for(&selector, &config, &spec.task, 0).map_err(|e| e.to_string())?;
    let ctx = TrialContext {
        config: &config,
        backend,
        clarifier: &ParkHandler,
        recorder: None,
        runs_root: runs.to_path_buf(),
        selector: None,
    };
    let task = tasks::resolve(&spec.task).unwrap();
    let report = run_trial(&ctx, &task, Some(&name)).map_err(|e| format!("{name}: {e}"))?;
    if report.outcome.m {
        return Err(format!("{name}: judged modeled"));
    }
    if report.exhausted != Some(spec.stage) {
        return Err(format!(
            "{name}: exhausted at {:?}, expected {}",
            report.exhausted, spec.stage
        ));
    }
    let record = RunDir::open(&report.run_dir)
        .and_then(|d| d.load_record())
        .map_err(|e| e.to_string())?;
    let last = record.stages.last().unwrap();
    if last.status != StageStatus::Exhausted {
        return Err(format!("{name}: last stage is {:?}", last.status));
    }
    let fault = last
        .attempts
        .last()
        .and_then(|a| a.fault.as_ref())
        .ok_or_else(|| format!("{name}: final attempt has no fault"))?;
    let found = serde_json::to_string(fault).unwrap();
    if !found.contains(&format!("\"{}\"", spec.expect)) {
        return Err(format!("{name}: expected {}, got {found}", spec.expect));
    }
    Ok(())
}

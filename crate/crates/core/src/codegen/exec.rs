//! Running generated code through the runtime shim.
//!
//! Shim exit protocol:
//!
//! | exit | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | ran to completion; `results/results.json` written    |
//! | 3    | compile pre-pass failed, nothing was executed        |
//! | 4    | ran, but the results file is missing or invalid      |
//! | 125  | the runtime itself is unusable (missing interpreter) |
//! | else | the program crashed                                  |

use std::fs;
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::extract::CodeArtifact;

pub const EXIT_SYNTAX: i32 = 3;
pub const EXIT_CONTRACT: i32 = 4;
pub const EXIT_SETUP: i32 = 125;

pub const RESULTS_FILE: &str = "results/results.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Success,
    SyntaxError,
    RuntimeError,
    Timeout,
    ContractViolation,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Success => "success",
            OutcomeKind::SyntaxError => "syntax_error",
            OutcomeKind::RuntimeError => "runtime_error",
            OutcomeKind::Timeout => "timeout",
            OutcomeKind::ContractViolation => "contract_violation",
        }
    }
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contents of `results/results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingResults {
    pub episode_returns: Vec<f64>,
    pub eval_returns: Vec<f64>,
    pub model_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_seeds: Option<Vec<u64>>,
    /// Per evaluation episode: whether the task's completion condition held.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_completed: Option<Vec<bool>>,
}

impl TrainingResults {
    pub fn check(&self) -> Result<(), String> {
        if self.episode_returns.is_empty() {
            return Err("episode_returns is empty".into());
        }
        let lists = [
            ("episode_returns", &self.episode_returns),
            ("eval_returns", &self.eval_returns),
        ];
        for (name, list) in lists {
            if let Some(i) = list.iter().position(|x| !x.is_finite()) {
                return Err(format!("{name}[{i}] is not finite"));
            }
        }
        if let Some(seeds) = &self.eval_seeds {
            if seeds.len() != self.eval_returns.len() {
                return Err(format!(
                    "eval_seeds has {} entries for {} eval_returns",
                    seeds.len(),
                    self.eval_returns.len()
                ));
            }
        }
        if let Some(done) = &self.eval_completed {
            if done.len() != self.eval_returns.len() {
                return Err(format!(
                    "eval_completed has {} entries for {} eval_returns",
                    done.len(),
                    self.eval_returns.len()
                ));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let results: TrainingResults =
            serde_json::from_str(text).map_err(|e| format!("results file: {e}"))?;
        results.check()?;
        Ok(results)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text =
            fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<TrainingResults>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ExecutionOutcome {
    /// Text to show the coding agent when asking for a fix.
    pub fn error_excerpt(&self, limit: usize) -> String {
        let mut text = String::new();
        if let Some(d) = &self.detail {
            text.push_str(d);
            text.push('\n');
        }
        text.push_str(&self.stderr);
        if text.trim().is_empty() {
            text = self.stdout.clone();
        }
        tail(&text, limit).trim().to_string()
    }
}

fn relativize(text: &str, workspace: &Path) -> String {
    let prefix = format!("{}/", workspace.display());
    text.replace(&prefix, "")
}

fn tail(s: &str, limit: usize) -> &str {
    if s.len() <= limit {
        return s;
    }
    let mut start = s.len() - limit;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SandboxSetupError {
    #[error("cannot prepare workspace {path}: {message}")]
    Workspace { path: PathBuf, message: String },
    #[error("workspace {0} is not empty")]
    WorkspaceNotEmpty(PathBuf),
    #[error("cannot start the runtime shim `{program}`: {message}")]
    Spawn { program: String, message: String },
    #[error("the runtime shim reported an unusable environment: {0}")]
    Runtime(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    pub timeout_secs: f64,
    /// Bytes kept from each of stdout and stderr.
    pub output_cap: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            timeout_secs: 1800.0,
            output_cap: 256 * 1024,
        }
    }
}

impl ExecLimits {
    pub fn desk() -> Self {
        Self {
            timeout_secs: 300.0,
            ..Self::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

/// Launches the shim as `<shim...> <entrypoint>` inside a workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Executor {
    pub shim: Vec<String>,
    /// Variables passed through on top of the cleared environment.
    pub env: Vec<(String, String)>,
}

impl Default for Executor {
    fn default() -> Self {
        Self {
            shim: vec!["python3".into(), "-m".into(), "rl_runtime_kit.shim".into()],
            env: Vec::new(),
        }
    }
}

fn reader(mut pipe: impl Read + Send + 'static, cap: usize) -> thread::JoinHandle<(String, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        let mut truncated = false;
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    truncated |= n > room;
                }
            }
        }
        (String::from_utf8_lossy(&kept).into_owned(), truncated)
    })
}

fn kill_group(pgid: u32) {
    // SAFETY: kill(2) with a negative pid signals a process group; it has no
    // memory-safety preconditions.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

impl Executor {
    pub fn new(shim: Vec<String>) -> Self {
        Self {
            shim,
            env: Vec::new(),
        }
    }

    fn prepare(&self, code: &CodeArtifact, workspace: &Path) -> Result<(), SandboxSetupError> {
        let setup = |e: std::io::Error| SandboxSetupError::Workspace {
            path: workspace.to_path_buf(),
            message: e.to_string(),
        };
        if workspace.exists() {
            let mut entries = fs::read_dir(workspace).map_err(setup)?;
            if entries.next().is_some() {
                return Err(SandboxSetupError::WorkspaceNotEmpty(
                    workspace.to_path_buf(),
                ));
            }
        }
        fs::create_dir_all(workspace.join("code")).map_err(setup)?;
        fs::create_dir_all(workspace.join("results")).map_err(setup)?;
        fs::write(workspace.join("code").join(&code.entrypoint), &code.source).map_err(setup)?;
        Ok(())
    }

    /// Runs `code` in `workspace`, which must be empty or absent.
    pub fn execute(
        &self,
        code: &CodeArtifact,
        workspace: &Path,
        limits: &ExecLimits,
    ) -> Result<ExecutionOutcome, SandboxSetupError> {
        let (program, args) = self
            .shim
            .split_first()
            .ok_or_else(|| SandboxSetupError::Spawn {
                program: String::new(),
                message: "empty shim command".into(),
            })?;
        self.prepare(code, workspace)?;
        let workspace = workspace
            .canonicalize()
            .map_err(|e| SandboxSetupError::Workspace {
                path: workspace.to_path_buf(),
                message: e.to_string(),
            })?;

        let mut cmd = Command::new(program);
        cmd.args(args)
            .arg(format!("code/{}", code.entrypoint))
            .current_dir(&workspace)
            .env_clear()
            .env("PATH", std::env::var("PATH").unwrap_or_default())
            .env("HOME", &workspace)
            .env("LANG", "C.UTF-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONUNBUFFERED", "1")
            .env("NL2RL_WORKSPACE", &workspace)
            .env("NL2RL_NETWORK", "off")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        for (k, v) in &self.env {
            cmd.env(k, v);
        }

        let started = Instant::now();
        let mut child = cmd.spawn().map_err(|e| SandboxSetupError::Spawn {
            program: program.clone(),
            message: e.to_string(),
        })?;
        let pgid = child.id();
        let out = reader(child.stdout.take().expect("piped"), limits.output_cap);
        let err = reader(child.stderr.take().expect("piped"), limits.output_cap);

        let deadline = started + limits.timeout();
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => {
                    timed_out = true;
                    kill_group(pgid);
                    break child.wait().ok();
                }
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(_) => {
                    kill_group(pgid);
                    break child.wait().ok();
                }
            }
        };
        // Descendants outlive their parent unless the group is reaped.
        kill_group(pgid);
        let wall_ms = started.elapsed().as_millis() as u64;
        let (stdout, out_cut) = out.join().unwrap_or_default();
        let (stderr, err_cut) = err.join().unwrap_or_default();
        // Tracebacks carry absolute script paths; keep them workspace-relative
        // so repair prompts are the same from run to run.
        let stdout = relativize(&stdout, &workspace);
        let stderr = relativize(&stderr, &workspace);

        let exit_code = status.and_then(|s| s.code());
        let signal = status.and_then(|s| s.signal());
        let mut outcome = ExecutionOutcome {
            kind: OutcomeKind::RuntimeError,
            exit_code,
            signal,
            stdout,
            stderr,
            wall_ms,
            results: None,
            detail: None,
        };
        if out_cut || err_cut {
            log::debug!("output of {} truncated", workspace.display());
        }
        if timed_out {
            outcome.kind = OutcomeKind::Timeout;
            outcome.detail = Some(format!(
                "killed after exceeding the {:.1} s limit",
                limits.timeout_secs
            ));
            return Ok(outcome);
        }
        match exit_code {
            Some(0) => match TrainingResults::load(&workspace.join(RESULTS_FILE)) {
                Ok(results) => {
                    outcome.kind = OutcomeKind::Success;
                    outcome.results = Some(results);
                }
                Err(e) => {
                    outcome.kind = OutcomeKind::ContractViolation;
                    outcome.detail = Some(e);
                }
            },
            Some(EXIT_SYNTAX) => outcome.kind = OutcomeKind::SyntaxError,
            Some(EXIT_CONTRACT) => {
                outcome.kind = OutcomeKind::ContractViolation;
                outcome.detail = TrainingResults::load(&workspace.join(RESULTS_FILE)).err();
            }
            Some(EXIT_SETUP) => {
                return Err(SandboxSetupError::Runtime(
                    tail(&outcome.stderr, 2000).trim().to_string(),
                ))
            }
            _ => outcome.kind = OutcomeKind::RuntimeError,
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workspace_paths_become_relative() {
        let ws = Path::new("/tmp/runs/r1/exec/attempt-1");
        let text = "File \"/tmp/runs/r1/exec/attempt-1/code/main.py\", line 3";
        assert_eq!(relativize(text, ws), "File \"code/main.py\", line 3");
        assert_eq!(relativize("/tmp/other/x.py", ws), "/tmp/other/x.py");
    }

    #[test]
    fn results_schema_checks() {
        let ok = r#"{"episode_returns":[1,2],"eval_returns":[3],"model_path":"m.pt"}"#;
        assert!(TrainingResults::parse(ok).is_ok());
        let empty = r#"{"episode_returns":[],"eval_returns":[3],"model_path":"m"}"#;
        assert!(TrainingResults::parse(empty).is_err());
        let seeds =
            r#"{"episode_returns":[1],"eval_returns":[3],"model_path":"m","eval_seeds":[1,2]}"#;
        assert!(TrainingResults::parse(seeds).is_err());
        assert!(TrainingResults::parse(r#"{"episode_returns":[1]}"#).is_err());
        assert!(TrainingResults::parse(
            r#"{"episode_returns":[NaN],"eval_returns":[],"model_path":""}"#
        )
        .is_err());
    }

    #[test]
    fn error_excerpt_keeps_the_tail() {
        let o = ExecutionOutcome {
            kind: OutcomeKind::RuntimeError,
            exit_code: Some(1),
            signal: None,
            stdout: String::new(),
            stderr: format!(
                "{}NameError: name 'x' is not defined",
                "noise\n".repeat(1000)
            ),
            wall_ms: 1,
            results: None,
            detail: None,
        };
        let e = o.error_excerpt(100);
        assert!(e.len() <= 100);
        assert!(e.ends_with("NameError: name 'x' is not defined"));
    }

    #[test]
    fn missing_program_is_a_setup_error() {
        let dir = tempfile::tempdir().unwrap();
        let exec = Executor::new(vec!["/nonexistent/interpreter".into()]);
        let code = super::super::extract_code("print(1)\n").unwrap();
        let err = exec
            .execute(&code, &dir.path().join("ws"), &ExecLimits::default())
            .unwrap_err();
        assert!(matches!(err, SandboxSetupError::Spawn { .. }));
    }

    #[test]
    fn workspace_must_be_empty() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("stale"), "x").unwrap();
        let code = super::super::extract_code("print(1)\n").unwrap();
        let err = Executor::new(vec!["true".into()])
            .execute(&code, dir.path(), &ExecLimits::default())
            .unwrap_err();
        assert!(matches!(err, SandboxSetupError::WorkspaceNotEmpty(_)));
    }
}

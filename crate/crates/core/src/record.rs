//! Run records and their on-disk layout.
//!
//! ```text
//! runs/<run-id>/
//!   record.json          the RunRecord, rewritten after every stage
//!   <stage>.json         accepted artifact of each IR stage
//!   transcript.json      every prompt and reply of the run
//!   coding.json          final code artifact
//!   code/main.py         final generated source
//!   exec/attempt-<k>/    one workspace per execution attempt
//!   results/results.json results of the final attempt, when it wrote any
//!   outcome.json         the (M, C, P) verdict with evidence
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codegen::{CodeArtifact, RepairAttempt};
use crate::evaluation::{ModelingOverride, TrialOutcome};
use crate::gateway::{Session, TranscriptEntry};
use crate::ir::MdpIr;
use crate::pipeline::{
    apply_artifact, stage_artifact, ArtifactError, ClarificationRequest, StageResult, StageStatus,
};
use crate::stage::StageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    /// Waiting for a clarification answer.
    Parked,
    /// An IR stage gave up.
    Exhausted,
    /// The IR is complete; code not yet run.
    Modeled,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub task_id: String,
    pub description: String,
    pub backend: String,
    pub created_at: String,
    pub status: RunStatus,
    pub stages: Vec<StageResult>,
    pub ir: MdpIr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<ClarificationRequest>,
    /// Per-call-key ordinals, restored on resume.
    pub counters: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeArtifact>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub executions: Vec<RepairAttempt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TrialOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modeling_override: Option<ModelingOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn new(run_id: &str, task_id: &str, description: &str, backend: &str) -> Self {
        Self {
            run_id: run_id.to_string(),
            task_id: task_id.to_string(),
            description: description.to_string(),
            backend: backend.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
            status: RunStatus::Running,
            stages: Vec::new(),
            ir: MdpIr::default(),
            pending: None,
            counters: BTreeMap::new(),
            code: None,
            executions: Vec::new(),
            outcome: None,
            modeling_override: None,
            error: None,
        }
    }

    pub fn stage(&self, stage: StageId) -> Option<&StageResult> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn completed(&self, stage: StageId) -> bool {
        self.stage(stage)
            .is_some_and(|s| s.status == StageStatus::Completed)
    }

    /// Accepted artifacts in stage order, rebuilt from the IR.
    pub fn artifacts(&self) -> Vec<(StageId, Value)> {
        self.stages
            .iter()
            .filter(|s| s.status == StageStatus::Completed)
            .filter_map(|s| stage_artifact(&self.ir, s.stage).map(|v| (s.stage, v)))
            .collect()
    }
}

/// Rebuilds an IR from per-stage artifact documents, in stage order.
pub fn ir_from_artifacts(artifacts: &[(StageId, Value)]) -> Result<MdpIr, ArtifactError> {
    let mut ir = MdpIr::default();
    let mut sorted: Vec<&(StageId, Value)> = artifacts.iter().collect();
    sorted.sort_by_key(|(s, _)| *s);
    for (stage, doc) in sorted {
        apply_artifact(&mut ir, *stage, doc)?;
    }
    Ok(ir)
}

/// Where a run is persisted while it progresses.
pub trait RecordSink {
    fn save(&mut self, record: &RunRecord, session: &Session) -> io::Result<()>;

    fn stage_completed(
        &mut self,
        record: &RunRecord,
        _stage: StageId,
        session: &Session,
    ) -> io::Result<()> {
        self.save(record, session)
    }
}

/// Discards everything.
pub struct NoSink;

impl RecordSink for NoSink {
    fn save(&mut self, _: &RunRecord, _: &Session) -> io::Result<()> {
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records always serialize");
    s.push('\n');
    s
}

/// A run's directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    path: PathBuf,
    /// Transcript entries of earlier sessions (before a resume).
    earlier: Vec<TranscriptEntry>,
}

static RUN_SEQ: AtomicU64 = AtomicU64::new(0);

/// A fresh run id: task, UTC timestamp, process and sequence number.
pub fn new_run_id(task_id: &str) -> String {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    let seq = RUN_SEQ.fetch_add(1, Ordering::SeqCst);
    format!("{task_id}-{stamp}-{}-{seq}", std::process::id())
}

impl RunDir {
    pub fn create(runs_root: &Path, run_id: &str) -> io::Result<Self> {
        let path = runs_root.join(run_id);
        if path.exists() {
            return Err(io::Error::new(
                io::ErrorKind::AlreadyExists,
                format!("run directory {} already exists", path.display()),
            ));
        }
        fs::create_dir_all(&path)?;
        Ok(Self {
            path,
            earlier: Vec::new(),
        })
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        if !path.join("record.json").is_file() {
            return Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("{} holds no run record", path.display()),
            ));
        }
        let earlier = match fs::read_to_string(path.join("transcript.json")) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            path: path.to_path_buf(),
            earlier,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn exec_root(&self) -> PathBuf {
        self.path.join("exec")
    }

    pub fn load_record(&self) -> io::Result<RunRecord> {
        let text = fs::read_to_string(self.path.join("record.json"))?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn save_record(&self, record: &RunRecord) -> io::Result<()> {
        write_atomic(
            &self.path.join("record.json"),
            to_pretty_json(record).as_bytes(),
        )
    }

    pub fn write_artifact(&self, stage: StageId, doc: &Value) -> io::Result<()> {
        write_atomic(
            &self.path.join(format!("{stage}.json")),
            to_pretty_json(doc).as_bytes(),
        )
    }

    pub fn read_artifact(&self, stage: StageId) -> io::Result<Option<Value>> {
        match fs::read_to_string(self.path.join(format!("{stage}.json"))) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn write_outcome(&self, outcome: &TrialOutcome) -> io::Result<()> {
        write_atomic(
            &self.path.join("outcome.json"),
            to_pretty_json(outcome).as_bytes(),
        )
    }

    /// Final code and results of the last execution attempt.
    pub fn write_code(&self, code: &CodeArtifact, attempt: Option<u32>) -> io::Result<()> {
        let dir = self.path.join("code");
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(&code.entrypoint), code.source.as_bytes())?;
        let doc = serde_json::json!({ "ENTRYPOINT": code.entrypoint, "SOURCE": code.source });
        write_atomic(
            &self.path.join("coding.json"),
            to_pretty_json(&doc).as_bytes(),
        )?;
        if let Some(k) = attempt {
            let produced = self
                .exec_root()
                .join(format!("attempt-{k}"))
                .join(crate::codegen::RESULTS_FILE);
            if produced.is_file() {
                fs::create_dir_all(self.path.join("results"))?;
                fs::copy(produced, self.path.join(crate::codegen::RESULTS_FILE))?;
            }
        }
        Ok(())
    }

    fn write_transcript(&self, session: &Session) -> io::Result<()> {
        let all: Vec<&TranscriptEntry> = self.earlier.iter().chain(session.log()).collect();
        write_atomic(
            &self.path.join("transcript.json"),
            to_pretty_json(&all).as_bytes(),
        )
    }
}

impl RecordSink for RunDir {
    fn save(&mut self, record: &RunRecord, session: &Session) -> io::Result<()> {
        self.write_transcript(session)?;
        self.save_record(record)
    }

    fn stage_completed(
        &mut self,
        record: &RunRecord,
        stage: StageId,
        session: &Session,
    ) -> io::Result<()> {
        if let Some(doc) = stage_artifact(&record.ir, stage) {
            self.write_artifact(stage, &doc)?;
        }
        self.save(record, session)
    }
}

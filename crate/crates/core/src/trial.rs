//! One trial end to end, and benches of many trials.
//!
//! A trial runs the IR stages, the coding agent with its repair loop, and
//! the three judges, persisting everything under its run directory.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::codegen::{repair_loop, CodegenError, LlmCoder, SandboxSetupError};
use crate::config::Config;
use crate::evaluation::{judge_modeling, judge_policy, Evidence, Report, TaskRow, TrialOutcome};
use crate::gateway::{
    backend_registry, CompletionBackend, GatewayError, Session, TranscriptWriter,
};
use crate::pipeline::{
    run_pipeline, ClarificationHandler, ClarificationRequest, PipelineError, StageEnv, StageStatus,
};
use crate::record::{new_run_id, RecordSink, RunDir, RunRecord, RunStatus};
use crate::registry::RegistryError;
use crate::stage::StageId;
use crate::tasks::Task;

#[derive(Debug, thiserror::Error)]
pub enum TrialError {
    #[error("run {run_id} is parked: {}", .request.question)]
    Pending {
        run_id: String,
        run_dir: PathBuf,
        request: Box<ClarificationRequest>,
    },
    #[error("run {0} has no pending clarification")]
    NoPendingRequest(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sandbox(#[from] SandboxSetupError),
    #[error(transparent)]
    Backend(#[from] RegistryError),
    #[error("{0}")]
    Pipeline(PipelineError),
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
}

impl From<PipelineError> for TrialError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Gateway(g) => TrialError::Gateway(g),
            PipelineError::Persist(io) => TrialError::Io(io),
            other => TrialError::Pipeline(other),
        }
    }
}

impl From<CodegenError> for TrialError {
    fn from(e: CodegenError) -> Self {
        match e {
            CodegenError::Gateway(g) => TrialError::Gateway(g),
            CodegenError::Sandbox(s) => TrialError::Sandbox(s),
            CodegenError::MissingSlot(m) => TrialError::Pipeline(PipelineError::MissingSlot(m)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialReport {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub status: RunStatus,
    pub outcome: TrialOutcome,
    /// Set when an IR stage gave up.
    pub exhausted: Option<StageId>,
}

/// What a trial runs against.
pub struct TrialContext<'a> {
    pub config: &'a Config,
    pub backend: Arc<dyn CompletionBackend>,
    pub clarifier: &'a dyn ClarificationHandler,
    pub recorder: Option<Arc<TranscriptWriter>>,
    pub runs_root: PathBuf,
    /// Stored in the record so a resumed run can rebuild its backend;
    /// the backend id when absent.
    pub selector: Option<String>,
}

impl TrialContext<'_> {
    fn session(&self, record: &RunRecord) -> Session {
        let mut s = Session::new(self.backend.clone(), &self.config.backend)
            .with_counters(record.counters.clone());
        if let Some(rec) = &self.recorder {
            s = s.with_recorder(rec.clone());
        }
        s
    }
}

/// Judges a record whose pipeline and code execution are over.
pub fn evaluate_record(record: &RunRecord, config: &Config) -> TrialOutcome {
    let modeling = judge_modeling(record, &config.symbols);
    let mut evidence = Evidence {
        modeling: modeling.evidence,
        ..Evidence::default()
    };
    let last = record.executions.last();
    let c = last.is_some_and(|a| {
        a.code.is_some() && a.outcome.kind != crate::codegen::OutcomeKind::SyntaxError
    });
    let c_strict = last.is_some_and(|a| a.outcome.kind == crate::codegen::OutcomeKind::Success);
    match last {
        None => evidence.coding.push("no code was generated".into()),
        Some(a) => evidence.coding.push(format!(
            "{} attempt(s); final outcome {}{}",
            record.executions.len(),
            a.outcome.kind,
            a.outcome
                .detail
                .as_deref()
                .map(|d| format!(": {d}"))
                .unwrap_or_default()
        )),
    }
    let results = last.and_then(|a| a.outcome.results.as_ref());
    let p = match (results, config.evaluation.criterion(&record.task_id)) {
        (None, _) => {
            evidence
                .policy
                .push("no training results from a successful run".into());
            false
        }
        (Some(_), None) => {
            evidence
                .policy
                .push(format!("no policy criterion for task {}", record.task_id));
            false
        }
        (Some(results), Some(criterion)) => match judge_policy(results, &criterion) {
            Ok(j) => {
                evidence.policy.extend(j.evidence);
                j.passed
            }
            Err(e) => {
                evidence.policy.push(e.to_string());
                false
            }
        },
    };
    TrialOutcome {
        m: modeling.passed,
        c,
        p,
        c_strict,
        modeling_overridden: modeling.overridden,
        evidence,
    }
}

fn finish(
    ctx: &TrialContext<'_>,
    dir: &mut RunDir,
    record: &mut RunRecord,
    session: &mut Session,
) -> Result<TrialReport, TrialError> {
    let env = StageEnv {
        description: &record.description.clone(),
        config: &ctx.config.pipeline,
        policy: &ctx.config.symbols,
        clarifier: ctx.clarifier,
    };
    let mut exhausted = None;
    match run_pipeline(record, session, &env, dir) {
        Ok(()) => {}
        Err(PipelineError::StageExhausted { stage, .. }) => exhausted = Some(stage),
        Err(PipelineError::PendingClarification { request, .. }) => {
            return Err(TrialError::Pending {
                run_id: record.run_id.clone(),
                run_dir: dir.path().to_path_buf(),
                request: Box::new(request),
            })
        }
        Err(e) => return Err(e.into()),
    }

    if exhausted.is_none() {
        let codegen = &ctx.config.codegen;
        let report = {
            let mut coder =
                LlmCoder::new(session, &record.description, &record.ir, &codegen.protocol)
                    .map_err(PipelineError::MissingSlot)?;
            repair_loop(
                &mut coder,
                &codegen.executor(),
                &dir.exec_root(),
                &codegen.limits,
                codegen.max_attempts,
            )
        };
        record.counters = session.counters().clone();
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                record.status = RunStatus::Failed;
                record.error = Some(e.to_string());
                dir.save(record, session)?;
                return Err(e.into());
            }
        };
        let last = report.final_attempt();
        if let Some(code) = &last.code {
            dir.write_code(code, Some(last.attempt))?;
        }
        record.code = last.code.clone();
        record.executions = report.attempts;
    }

    let outcome = evaluate_record(record, ctx.config);
    dir.write_outcome(&outcome)?;
    record.outcome = Some(outcome.clone());
    if exhausted.is_none() {
        record.status = RunStatus::Finished;
    }
    dir.save(record, session)?;
    log::info!(
        "run {}: M={} C={} P={}",
        record.run_id,
        outcome.m,
        outcome.c,
        outcome.p
    );
    Ok(TrialReport {
        run_id: record.run_id.clone(),
        run_dir: dir.path().to_path_buf(),
        status: record.status,
        outcome,
        exhausted,
    })
}

pub fn run_trial(
    ctx: &TrialContext<'_>,
    task: &Task,
    run_id: Option<&str>,
) -> Result<TrialReport, TrialError> {
    let run_id = run_id
        .map(str::to_string)
        .unwrap_or_else(|| new_run_id(&task.id));
    let mut dir = RunDir::create(&ctx.runs_root, &run_id)?;
    let backend = ctx.selector.clone().unwrap_or_else(|| ctx.backend.id());
    let mut record = RunRecord::new(&run_id, &task.id, &task.description, &backend);
    let mut session = ctx.session(&record);
    dir.save(&record, &session)?;
    finish(ctx, &mut dir, &mut record, &mut session)
}

/// Records `answer` on a parked run without resuming it.
pub fn answer_pending(run_dir: &Path, answer: &str) -> Result<RunRecord, TrialError> {
    let dir = RunDir::open(run_dir)?;
    let mut record = dir.load_record()?;
    let parked = record.status == RunStatus::Parked
        && record.pending.as_ref().is_some_and(|p| p.answer.is_none());
    if !parked {
        return Err(TrialError::NoPendingRequest(record.run_id));
    }
    let pending = record.pending.as_mut().expect("checked above");
    pending.answer(answer);
    let answered = pending.clone();
    let stage = record
        .stages
        .last_mut()
        .filter(|s| s.status == StageStatus::Parked && s.stage == answered.stage)
        .ok_or_else(|| TrialError::NoPendingRequest(record.run_id.clone()))?;
    if let Some(last) = stage.clarifications.last_mut() {
        *last = answered;
    }
    dir.save_record(&record)?;
    Ok(record)
}

/// Continues a parked run whose clarification has been answered.
pub fn resume_trial(ctx: &TrialContext<'_>, run_dir: &Path) -> Result<TrialReport, TrialError> {
    let mut dir = RunDir::open(run_dir)?;
    let mut record = dir.load_record()?;
    if record.status != RunStatus::Parked
        || !record.pending.as_ref().is_some_and(|p| p.answer.is_some())
    {
        return Err(TrialError::NoPendingRequest(record.run_id));
    }
    let mut session = ctx.session(&record);
    finish(ctx, &mut dir, &mut record, &mut session)
}

/// Picks the fixture directory for one task (and trial) under a replay or
/// scripted root: `<root>/<task>/trial-<k>` if present, else `<root>/<task>`
/// if present, else the root itself.
pub fn fixture_dir(root: &Path, task: &str, trial: u32) -> PathBuf {
    let per_trial = root.join(task).join(format!("trial-{trial}"));
    if per_trial.is_dir() {
        return per_trial;
    }
    let per_task = root.join(task);
    if per_task.is_dir() {
        return per_task;
    }
    root.to_path_buf()
}

/// Pins a backend selector to one task and trial: `replay:<root>` and
/// `scripted:<a>,<b>` arguments are resolved with [`fixture_dir`]; other
/// selectors pass through.
pub fn resolve_selector(selector: &str, task: &str, trial: u32) -> String {
    let Some((name, arg)) = selector.split_once(':') else {
        return selector.to_string();
    };
    match name {
        "replay" | "scripted" if !arg.is_empty() => {
            let dirs: Vec<String> = arg
                .split(',')
                .map(|d| fixture_dir(Path::new(d), task, trial).display().to_string())
                .collect();
            format!("{name}:{}", dirs.join(","))
        }
        _ => selector.to_string(),
    }
}

pub fn backend_for(
    selector: &str,
    config: &Config,
    task: &str,
    trial: u32,
) -> Result<Arc<dyn CompletionBackend>, RegistryError> {
    let resolved = resolve_selector(selector, task, trial);
    Ok(Arc::from(
        backend_registry().create(&resolved, &config.backend)?,
    ))
}

/// Outcomes of a bench, per task in the requested order.
#[derive(Debug, Clone, Default)]
pub struct BenchResult {
    pub tasks: Vec<(String, Vec<TrialOutcome>)>,
    pub run_ids: Vec<String>,
}

impl BenchResult {
    pub fn report(&self, label: &str) -> Report {
        Report {
            label: label.to_string(),
            rows: self
                .tasks
                .iter()
                .filter_map(|(task, outcomes)| TaskRow::from_trials(task, outcomes).ok())
                .collect(),
        }
    }
}

/// Transcript writer for trial `k` of a task, if it should be recorded.
pub type RecorderFn = dyn Fn(&Task, u32) -> Option<Arc<TranscriptWriter>> + Sync;

pub struct BenchPlan<'a> {
    pub config: &'a Config,
    pub tasks: Vec<Task>,
    pub trials: u32,
    pub parallelism: usize,
    /// Backend selector, resolved per task and trial.
    pub selector: &'a str,
    pub recorder: Option<&'a RecorderFn>,
    pub clarifier: &'a dyn ClarificationHandler,
    pub runs_root: PathBuf,
}

/// Runs every (task, trial) pair. A trial that cannot finish (backend
/// failure, parked clarification, sandbox trouble) counts as all-false with
/// the reason as evidence; the bench itself never aborts.
pub fn run_bench(plan: &BenchPlan<'_>) -> BenchResult {
    let jobs: Vec<(usize, u32)> = (0..plan.tasks.len())
        .flat_map(|t| (0..plan.trials).map(move |k| (t, k)))
        .collect();
    let queue = Mutex::new(jobs.into_iter());
    type Slot = Option<(TrialOutcome, Option<String>)>;
    let slots: Mutex<Vec<Vec<Slot>>> = Mutex::new(
        plan.tasks
            .iter()
            .map(|_| vec![None; plan.trials as usize])
            .collect(),
    );
    let workers = plan.parallelism.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap_or_else(|p| p.into_inner()).next();
                let Some((t, k)) = next else { break };
                let task = &plan.tasks[t];
                let result = run_one(plan, task, k);
                slots.lock().unwrap_or_else(|p| p.into_inner())[t][k as usize] = Some(result);
            });
        }
    });
    let slots = slots.into_inner().unwrap_or_else(|p| p.into_inner());
    let mut out = BenchResult::default();
    for (task, trials) in plan.tasks.iter().zip(slots) {
        let mut outcomes = Vec::new();
        for (outcome, run_id) in trials.into_iter().flatten() {
            outcomes.push(outcome);
            out.run_ids.extend(run_id);
        }
        out.tasks.push((task.id.clone(), outcomes));
    }
    out
}

fn run_one(plan: &BenchPlan<'_>, task: &Task, trial: u32) -> (TrialOutcome, Option<String>) {
    let selector = resolve_selector(plan.selector, &task.id, trial);
    let backend = match backend_registry().create(&selector, &plan.config.backend) {
        Ok(b) => Arc::from(b),
        Err(e) => return (TrialOutcome::crashed(format!("backend: {e}")), None),
    };
    let ctx = TrialContext {
        config: plan.config,
        backend,
        clarifier: plan.clarifier,
        recorder: plan.recorder.and_then(|r| r(task, trial)),
        runs_root: plan.runs_root.clone(),
        selector: Some(selector),
    };
    let run_id = format!("{}-trial-{trial}", new_run_id(&task.id));
    match run_trial(&ctx, task, Some(&run_id)) {
        Ok(report) => (report.outcome, Some(report.run_id)),
        Err(e) => {
            log::warn!("{} trial {trial}: {e}", task.id);
            (TrialOutcome::crashed(e.to_string()), Some(run_id))
        }
    }
}

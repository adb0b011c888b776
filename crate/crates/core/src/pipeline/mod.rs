//! The stage state machine.
//!
//! Stages run strictly in [`StageId::ALL`] order. Each stage renders its
//! prompt from the IR built so far, asks the model, parses and validates
//! the reply, and re-asks with the problems appended when the reply is
//! unusable. Stages covered by the self-check loop are then scored by the
//! model itself; low scores trigger re-examination and finally a question
//! to a human.

mod artifact;
mod clarify;
mod ec;

use serde::{Deserialize, Serialize};

use crate::gateway::{
    render_addendum, render_prompt, Addendum, CallRef, GatewayError, MissingSlotInput,
    PromptContext, Session,
};
use crate::ir::{
    parse_structured_block, validate_with, MdpIr, ParseError, ParseNote, SymbolPolicy,
    ValidationReport, Violation,
};
use crate::record::{RecordSink, RunRecord, RunStatus};
use crate::stage::StageId;

pub use artifact::{apply_artifact, apply_payload, stage_artifact, ArtifactError};
pub use clarify::{
    clarifier_registry, ClarificationHandler, ClarificationReply, ClarificationRequest,
    ClarifierRegistry, InteractiveHandler, ParkHandler, PrefilledHandler,
};
pub use ec::{
    parse_score_reply, verdict_for, ConfidenceReport, EcConfig, EcMode, ScoreReply, Verdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Re-asks after a parse or validation failure.
    pub max_reasks: u32,
    pub ec: EcConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_reasks: 2,
            ec: EcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptKind {
    Initial,
    Reask,
    Reexamine,
    Clarified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageFault {
    Parse(ParseError),
    Invalid(Vec<Violation>),
    Unattachable(String),
}

impl StageFault {
    fn feedback(&self) -> String {
        match self {
            StageFault::Parse(ParseError::NoPayloadFound) => {
                "- no payload in the required output format was found".into()
            }
            StageFault::Parse(e) => format!("- {e}"),
            StageFault::Invalid(vs) => vs
                .iter()
                .map(|v| format!("- {v}"))
                .collect::<Vec<_>>()
                .join("\n"),
            StageFault::Unattachable(reason) => format!("- {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAttempt {
    pub kind: AttemptKind,
    pub call: CallRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<StageFault>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<ParseNote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Running,
    Completed,
    Exhausted,
    Parked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: StageId,
    /// Position in the run's start order.
    pub seq: usize,
    pub status: StageStatus,
    pub attempts: Vec<StageAttempt>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<ConfidenceReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clarifications: Vec<ClarificationRequest>,
    /// Validation of the IR as of this stage's accepted output.
    pub report: ValidationReport,
}

impl StageResult {
    pub fn new(stage: StageId, seq: usize) -> Self {
        Self {
            stage,
            seq,
            status: StageStatus::Running,
            attempts: Vec::new(),
            checks: Vec::new(),
            clarifications: Vec::new(),
            report: ValidationReport::default(),
        }
    }

    pub fn reexaminations(&self) -> usize {
        self.attempts
            .iter()
            .filter(|a| a.kind == AttemptKind::Reexamine)
            .count()
    }

    /// Re-examinations since the last clarification answer.
    fn round_reexaminations(&self) -> u32 {
        self.attempts
            .iter()
            .rev()
            .take_while(|a| a.kind != AttemptKind::Clarified)
            .filter(|a| a.kind == AttemptKind::Reexamine)
            .count() as u32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {stage} gave no usable output after {attempts} attempt(s)")]
    StageExhausted {
        stage: StageId,
        attempts: usize,
        result: Box<StageResult>,
    },
    #[error("stage {} is waiting for a clarification: {}", .request.stage, .request.question)]
    PendingClarification {
        request: ClarificationRequest,
        result: Box<StageResult>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    MissingSlot(#[from] MissingSlotInput),
    #[error("run cannot continue: {0}")]
    State(String),
    #[error("failed to persist run: {0}")]
    Persist(#[from] std::io::Error),
}

/// Everything a stage needs besides the IR and the session.
pub struct StageEnv<'a> {
    pub description: &'a str,
    pub config: &'a PipelineConfig,
    pub policy: &'a SymbolPolicy,
    pub clarifier: &'a dyn ClarificationHandler,
}

#[derive(Debug, Clone)]
pub struct StageRun {
    pub result: StageResult,
    pub ir: MdpIr,
}

fn step_description(stage: StageId) -> &'static str {
    match stage {
        StageId::Parameter => {
            "extract every given parameter (constant) with its symbol, shape, definition and type"
        }
        StageId::Objective => "state the objective of the problem",
        StageId::Variable => {
            "extract every decision variable with its symbol, shape and definition"
        }
        StageId::Constraint => "list every constraint of the problem",
        StageId::ObjectiveModeling => "write the objective as a formula over the declared symbols",
        StageId::ConstraintModeling => {
            "write each constraint as a formula over the declared symbols"
        }
        StageId::Sar => "define the state, action and reward of the MDP",
        StageId::Env => "specify the environment the agent is trained in",
        StageId::Coding => "write the training code",
    }
}

struct StageRunner<'a, 's> {
    stage: StageId,
    base_ir: &'a MdpIr,
    env: &'a StageEnv<'a>,
    session: &'s mut Session,
    result: StageResult,
}

enum Asked {
    Accepted { ir: Box<MdpIr>, raw: String },
    Exhausted,
}

impl StageRunner<'_, '_> {
    fn check(&self, raw: &str) -> Result<(MdpIr, Vec<ParseNote>, ValidationReport), StageFault> {
        let kind = self
            .stage
            .payload_kind()
            .ok_or_else(|| StageFault::Unattachable("stage has no IR payload".into()))?;
        let parsed = parse_structured_block(raw, kind).map_err(StageFault::Parse)?;
        let mut ir = self.base_ir.clone();
        match apply_payload(&mut ir, self.stage, parsed.value) {
            Ok(()) => {}
            Err(ArtifactError::Violation(v)) => return Err(StageFault::Invalid(vec![v])),
            Err(e) => return Err(StageFault::Unattachable(e.to_string())),
        }
        let report = validate_with(&ir, self.env.policy);
        if !report.is_clean() {
            return Err(StageFault::Invalid(report.violations));
        }
        Ok((ir, parsed.notes, report))
    }

    /// One ask plus up to `max_reasks` re-asks.
    fn ask(&mut self, base: &str, first: AttemptKind, extra: &str) -> Result<Asked, PipelineError> {
        let mut prompt = format!("{base}{extra}");
        for i in 0..=self.env.config.max_reasks {
            let kind = if i == 0 { first } else { AttemptKind::Reask };
            let (call, response) = self.session.complete(self.stage.as_str(), prompt)?;
            match self.check(&response.text) {
                Ok((ir, notes, report)) => {
                    self.result.attempts.push(StageAttempt {
                        kind,
                        call,
                        fault: None,
                        notes,
                    });
                    self.result.report = report;
                    return Ok(Asked::Accepted {
                        ir: Box::new(ir),
                        raw: response.text,
                    });
                }
                Err(fault) => {
                    log::info!("{}: attempt rejected: {}", self.stage, fault.feedback());
                    let reask = render_addendum(
                        Addendum::Reask,
                        &[
                            ("previous", response.text.trim().to_string()),
                            ("feedback", fault.feedback()),
                        ],
                    );
                    prompt = format!("{base}{extra}{reask}");
                    self.result.attempts.push(StageAttempt {
                        kind,
                        call,
                        fault: Some(fault),
                        notes: Vec::new(),
                    });
                }
            }
        }
        Ok(Asked::Exhausted)
    }

    fn self_check(&mut self, candidate: &MdpIr) -> Result<ConfidenceReport, PipelineError> {
        let extraction = stage_artifact(candidate, self.stage)
            .map(|v| serde_json::to_string_pretty(&v).expect("json values always serialize"))
            .unwrap_or_default();
        let prompt = render_addendum(
            Addendum::SelfCheck,
            &[
                ("description", self.env.description.trim().to_string()),
                ("task", step_description(self.stage).to_string()),
                ("extraction", extraction),
            ],
        );
        let key = format!("{}_check", self.stage);
        let (call, response) = self
            .session
            .complete(&key, prompt.trim_start().to_string())?;
        let reply = parse_score_reply(&response.text);
        let (score, unparseable) = match reply.score {
            Ok(s) => (s, None),
            Err(e) => (0.0, Some(e)),
        };
        let ec = &self.env.config.ec;
        let verdict = verdict_for(
            score,
            ec.threshold_for(self.stage),
            self.result.round_reexaminations(),
            ec.max_reexaminations,
        );
        Ok(ConfidenceReport {
            score,
            rationale: reply.rationale,
            verdict,
            question: reply.question,
            unparseable,
            call,
        })
    }

    fn exhausted(self) -> PipelineError {
        let mut result = self.result;
        result.status = StageStatus::Exhausted;
        PipelineError::StageExhausted {
            stage: self.stage,
            attempts: result.attempts.len(),
            result: Box::new(result),
        }
    }

    fn run(mut self, resumed: bool) -> Result<StageRun, PipelineError> {
        let ctx = PromptContext {
            description: self.env.description,
            ir: self.base_ir,
        };
        let base = render_prompt(self.stage, &ctx)?;
        let (mut kind, mut extra) = (AttemptKind::Initial, String::new());
        if resumed {
            let answered = self
                .result
                .clarifications
                .last()
                .and_then(|r| r.answer.clone().map(|a| (r.question.clone(), a)));
            let Some((question, answer)) = answered else {
                return Err(PipelineError::State(format!(
                    "stage {} is parked without an answered clarification",
                    self.stage
                )));
            };
            kind = AttemptKind::Clarified;
            extra = render_addendum(
                Addendum::Clarification,
                &[("question", question), ("answer", answer)],
            );
        }
        let ec_on = self.env.config.ec.applies_to(self.stage);
        loop {
            let (ir, raw) = match self.ask(&base, kind, &extra)? {
                Asked::Accepted { ir, raw } => (*ir, raw),
                Asked::Exhausted => return Err(self.exhausted()),
            };
            if !ec_on {
                return Ok(self.finish(ir));
            }
            let report = self.self_check(&ir)?;
            let verdict = report.verdict;
            let (score, rationale, question) = (
                report.score,
                report.rationale.clone(),
                report.question.clone(),
            );
            self.result.checks.push(report);
            match verdict {
                Verdict::Accept => return Ok(self.finish(ir)),
                Verdict::Reexamine => {
                    kind = AttemptKind::Reexamine;
                    extra = render_addendum(
                        Addendum::Reexamine,
                        &[
                            ("previous", raw.trim().to_string()),
                            ("score", format!("{score:.2}")),
                            (
                                "rationale",
                                if rationale.is_empty() {
                                    "no reason given".into()
                                } else {
                                    rationale
                                },
                            ),
                        ],
                    );
                }
                Verdict::Clarify => {
                    let limit = self.env.config.ec.max_clarifications as usize;
                    if self.result.clarifications.len() >= limit {
                        return Err(self.exhausted());
                    }
                    let question = question.unwrap_or_else(|| {
                        format!(
                            "The {} step could not be completed with confidence. What should be used?",
                            self.stage
                        )
                    });
                    let mut request = ClarificationRequest::new(self.stage, question.clone());
                    match self.env.clarifier.ask(&request) {
                        ClarificationReply::Answer(answer) => {
                            request.answer(&answer);
                            self.result.clarifications.push(request);
                            kind = AttemptKind::Clarified;
                            extra = render_addendum(
                                Addendum::Clarification,
                                &[("question", question), ("answer", answer)],
                            );
                        }
                        ClarificationReply::Park => {
                            self.result.clarifications.push(request.clone());
                            self.result.status = StageStatus::Parked;
                            return Err(PipelineError::PendingClarification {
                                request,
                                result: Box::new(self.result),
                            });
                        }
                    }
                }
            }
        }
    }

    fn finish(mut self, ir: MdpIr) -> StageRun {
        self.result.status = StageStatus::Completed;
        StageRun {
            result: self.result,
            ir,
        }
    }
}

/// Runs one IR stage over `ir`, which must already hold every dependency.
/// `resume` continues a parked stage whose clarification has been answered.
pub fn run_stage(
    stage: StageId,
    ir: &MdpIr,
    env: &StageEnv<'_>,
    session: &mut Session,
    seq: usize,
    resume: Option<StageResult>,
) -> Result<StageRun, PipelineError> {
    if stage == StageId::Coding {
        return Err(PipelineError::State(
            "the coding stage runs through the code executor".into(),
        ));
    }
    let resumed = resume.is_some();
    let mut result = resume.unwrap_or_else(|| StageResult::new(stage, seq));
    result.status = StageStatus::Running;
    StageRunner {
        stage,
        base_ir: ir,
        env,
        session,
        result,
    }
    .run(resumed)
}

/// IR stages, in execution order.
pub fn ir_stages() -> impl Iterator<Item = StageId> {
    StageId::ALL.into_iter().filter(|s| *s != StageId::Coding)
}

/// Runs every IR stage not yet completed in `record`, persisting after each
/// stage. A parked stage is resumed once its request has an answer.
pub fn run_pipeline(
    record: &mut RunRecord,
    session: &mut Session,
    env: &StageEnv<'_>,
    sink: &mut dyn RecordSink,
) -> Result<(), PipelineError> {
    record.status = RunStatus::Running;
    for stage in ir_stages() {
        if record.completed(stage) {
            continue;
        }
        if let Some(dep) = stage.dependencies().iter().find(|d| !record.completed(**d)) {
            return Err(PipelineError::State(format!(
                "{stage} cannot start before {dep}"
            )));
        }
        let resume = match record.stages.last() {
            Some(last) if last.stage == stage && last.status == StageStatus::Parked => {
                let last = record.stages.pop().expect("checked above");
                let answered = last
                    .clarifications
                    .last()
                    .is_some_and(|r| r.answer.is_some());
                if !answered {
                    let request = last.clarifications.last().cloned().ok_or_else(|| {
                        PipelineError::State(format!("{stage} is parked without a request"))
                    })?;
                    record.stages.push(last.clone());
                    return Err(PipelineError::PendingClarification {
                        request,
                        result: Box::new(last),
                    });
                }
                Some(last)
            }
            _ => None,
        };
        let seq = record.stages.len();
        let outcome = run_stage(stage, &record.ir, env, session, seq, resume);
        record.counters = session.counters().clone();
        match outcome {
            Ok(run) => {
                record.ir = run.ir;
                record.stages.push(run.result);
                record.pending = None;
                sink.stage_completed(record, stage, session)?;
            }
            Err(err) => {
                match &err {
                    PipelineError::StageExhausted { result, .. } => {
                        record.stages.push((**result).clone());
                        record.status = RunStatus::Exhausted;
                    }
                    PipelineError::PendingClarification { request, result } => {
                        record.stages.push((**result).clone());
                        record.pending = Some(request.clone());
                        record.status = RunStatus::Parked;
                    }
                    other => {
                        record.status = RunStatus::Failed;
                        record.error = Some(other.to_string());
                    }
                }
                sink.save(record, session)?;
                return Err(err);
            }
        }
    }
    record.status = RunStatus::Modeled;
    sink.save(record, session)?;
    Ok(())
}

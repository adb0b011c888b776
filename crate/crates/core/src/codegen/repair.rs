use std::path::Path;

use serde::{Deserialize, Serialize};

use super::exec::{ExecLimits, ExecutionOutcome, Executor, OutcomeKind, SandboxSetupError};
use super::extract::{extract_code, CodeArtifact};
use crate::gateway::{
    render_addendum, render_prompt, Addendum, CallRef, GatewayError, MissingSlotInput,
    PromptContext, Session,
};
use crate::ir::MdpIr;
use crate::stage::StageId;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

/// Output of one coding-stage call.
#[derive(Debug, Clone)]
pub struct Generated {
    pub code: Option<CodeArtifact>,
    pub call: Option<CallRef>,
}

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    MissingSlot(#[from] MissingSlotInput),
    #[error(transparent)]
    Sandbox(#[from] SandboxSetupError),
}

/// Source of (re)generated code.
pub trait CodeRegenerator {
    /// `previous` is `None` for the first attempt.
    fn generate(
        &mut self,
        previous: Option<(&CodeArtifact, &ExecutionOutcome)>,
    ) -> Result<Generated, CodegenError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairAttempt {
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<CallRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeArtifact>,
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub attempts: Vec<RepairAttempt>,
}

impl RepairReport {
    pub fn final_attempt(&self) -> &RepairAttempt {
        self.attempts.last().expect("at least one attempt")
    }

    pub fn final_outcome(&self) -> &ExecutionOutcome {
        &self.final_attempt().outcome
    }

    /// Literal coding success: code exists and compiled.
    pub fn coding_success(&self) -> bool {
        let last = self.final_attempt();
        last.code.is_some() && last.outcome.kind != OutcomeKind::SyntaxError
    }

    /// Strict coding success: ran to completion with valid results.
    pub fn completed(&self) -> bool {
        self.final_outcome().kind == OutcomeKind::Success
    }
}

fn no_code_outcome() -> ExecutionOutcome {
    ExecutionOutcome {
        kind: OutcomeKind::SyntaxError,
        exit_code: None,
        signal: None,
        stdout: String::new(),
        stderr: String::new(),
        wall_ms: 0,
        results: None,
        detail: Some("the reply contained no code".into()),
    }
}

/// Generates, executes and regenerates until success or `max_attempts`.
/// Attempt `k` runs in `<workspace_root>/attempt-<k>`.
pub fn repair_loop(
    coder: &mut dyn CodeRegenerator,
    executor: &Executor,
    workspace_root: &Path,
    limits: &ExecLimits,
    max_attempts: u32,
) -> Result<RepairReport, CodegenError> {
    let mut attempts: Vec<RepairAttempt> = Vec::new();
    for k in 1..=max_attempts.max(1) {
        let previous = attempts
            .last()
            .and_then(|a| a.code.as_ref().map(|c| (c, &a.outcome)));
        let generated = coder.generate(previous)?;
        let outcome = match &generated.code {
            Some(code) => {
                executor.execute(code, &workspace_root.join(format!("attempt-{k}")), limits)?
            }
            None => no_code_outcome(),
        };
        log::info!("coding attempt {k}: {}", outcome.kind);
        let done = outcome.kind == OutcomeKind::Success;
        attempts.push(RepairAttempt {
            attempt: k,
            call: generated.call,
            code: generated.code,
            outcome,
        });
        if done {
            break;
        }
    }
    Ok(RepairReport { attempts })
}

/// Evaluation protocol announced to the generated code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalProtocol {
    pub episodes: u32,
    pub first_seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            episodes: 20,
            first_seed: 1000,
        }
    }
}

impl EvalProtocol {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.episodes as u64)
            .map(|i| self.first_seed + i)
            .collect()
    }
}

/// The coding agent: renders the coding prompt with the results contract
/// and, on repair, the failed source and its error.
pub struct LlmCoder<'a> {
    session: &'a mut Session,
    base: String,
    error_limit: usize,
}

impl<'a> LlmCoder<'a> {
    pub fn new(
        session: &'a mut Session,
        description: &str,
        ir: &MdpIr,
        protocol: &EvalProtocol,
    ) -> Result<Self, MissingSlotInput> {
        let ctx = PromptContext { description, ir };
        let seeds = protocol
            .seeds()
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        let contract = render_addendum(
            Addendum::ResultsContract,
            &[
                ("eval_episodes", protocol.episodes.to_string()),
                ("seed_list", format!("[{seeds}]")),
            ],
        );
        let base = format!("{}{contract}", render_prompt(StageId::Coding, &ctx)?);
        Ok(Self {
            session,
            base,
            error_limit: 4000,
        })
    }
}

impl CodeRegenerator for LlmCoder<'_> {
    fn generate(
        &mut self,
        previous: Option<(&CodeArtifact, &ExecutionOutcome)>,
    ) -> Result<Generated, CodegenError> {
        let prompt = match previous {
            None => self.base.clone(),
            Some((code, outcome)) => {
                let repair = render_addendum(
                    Addendum::Repair,
                    &[
                        ("outcome", outcome.kind.to_string()),
                        ("source", code.source.trim_end().to_string()),
                        ("error", outcome.error_excerpt(self.error_limit)),
                    ],
                );
                format!("{}{repair}", self.base)
            }
        };
        let (call, response) = self.session.complete(StageId::Coding.as_str(), prompt)?;
        Ok(Generated {
            code: extract_code(&response.text).ok(),
            call: Some(call),
        })
    }
}

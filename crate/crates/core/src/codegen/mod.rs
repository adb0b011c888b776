//! From coding-stage output to an executed, classified training run.

mod exec;
mod extract;
mod repair;

pub use exec::{
    ExecLimits, ExecutionOutcome, Executor, OutcomeKind, SandboxSetupError, TrainingResults,
    EXIT_CONTRACT, EXIT_SETUP, EXIT_SYNTAX, RESULTS_FILE,
};
pub use extract::{extract_code, CodeArtifact, NoCodeFound, ENTRYPOINT};
pub use repair::{
    repair_loop, CodeRegenerator, CodegenError, EvalProtocol, Generated, LlmCoder, RepairAttempt,
    RepairReport, DEFAULT_MAX_ATTEMPTS,
};

//! Exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | any other failure |
//! | 2 | usage or config error |
//! | 3 | task not found |
//! | 4 | run parked on a clarification question |
//! | 5 | run has no pending clarification |
//! | 6 | model backend failure |
//! | 7 | an IR stage exhausted its attempts |
//! | 8 | sandbox setup failure |

use nl2rl_core::config::ConfigError;
use nl2rl_core::gateway::GatewayError;
use nl2rl_core::registry::RegistryError;
use nl2rl_core::tasks::TaskError;
use nl2rl_core::trial::TrialError;

pub const USAGE: u8 = 2;
pub const TASK_NOT_FOUND: u8 = 3;
pub const PENDING: u8 = 4;
pub const NO_PENDING: u8 = 5;
pub const BACKEND: u8 = 6;
pub const EXHAUSTED: u8 = 7;
pub const SANDBOX: u8 = 8;

/// Bad flags or arguments that clap cannot catch.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A trial ended because a stage gave up.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} exhausted its attempts (run {run_id})")]
pub struct Exhausted {
    pub run_id: String,
    pub stage: String,
}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigError>() {
            return USAGE;
        }
        if cause.is::<TaskError>() {
            return TASK_NOT_FOUND;
        }
        if cause.is::<Exhausted>() {
            return EXHAUSTED;
        }
        if cause.is::<GatewayError>() {
            return BACKEND;
        }
        if let Some(e) = cause.downcast_ref::<RegistryError>() {
            return match e {
                RegistryError::Build { family, .. } if *family == "backend" => BACKEND,
                _ => USAGE,
            };
        }
        if let Some(e) = cause.downcast_ref::<TrialError>() {
            return match e {
                TrialError::Pending { .. } => PENDING,
                TrialError::NoPendingRequest(_) => NO_PENDING,
                TrialError::Gateway(_) => BACKEND,
                TrialError::Sandbox(_) => SANDBOX,
                TrialError::Backend(RegistryError::Build { family, .. })
                    if *family == "backend" =>
                {
                    BACKEND
                }
                TrialError::Backend(_) => USAGE,
                TrialError::Pipeline(_) | TrialError::Io(_) => 1,
            };
        }
    }
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_cause_chain() {
        let e = anyhow::Error::new(TaskError::NotFound("x".into())).context("resolving task");
        assert_eq!(code_for(&e), TASK_NOT_FOUND);
        let e = anyhow::Error::new(TrialError::NoPendingRequest("r".into()));
        assert_eq!(code_for(&e), NO_PENDING);
        let e = anyhow::Error::new(GatewayError::Auth("bad key".into()));
        assert_eq!(code_for(&e), BACKEND);
        assert_eq!(code_for(&anyhow::anyhow!("other")), 1);
    }
}

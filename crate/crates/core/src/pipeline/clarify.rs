//! Routing of clarification requests to a human.

use std::collections::BTreeMap;
use std::io::{BufRead, IsTerminal, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::registry::Registry;
use crate::stage::StageId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarificationRequest {
    pub stage: StageId,
    pub question: String,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answered_at: Option<String>,
}

impl ClarificationRequest {
    pub fn new(stage: StageId, question: String) -> Self {
        Self {
            stage,
            question,
            created_at: chrono::Utc::now().to_rfc3339(),
            answer: None,
            answered_at: None,
        }
    }

    pub fn answer(&mut self, text: &str) {
        self.answer = Some(text.trim().to_string());
        self.answered_at = Some(chrono::Utc::now().to_rfc3339());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClarificationReply {
    Answer(String),
    /// Leave the request unanswered; the run is parked until `clarify`.
    Park,
}

pub trait ClarificationHandler: Send + Sync {
    fn id(&self) -> String;
    fn ask(&self, request: &ClarificationRequest) -> ClarificationReply;
}

/// Never blocks: every request parks the run.
pub struct ParkHandler;

impl ClarificationHandler for ParkHandler {
    fn id(&self) -> String {
        "park".into()
    }

    fn ask(&self, _: &ClarificationRequest) -> ClarificationReply {
        ClarificationReply::Park
    }
}

/// Canned answers, per stage or for every stage. Stages without an answer
/// park.
#[derive(Default)]
pub struct PrefilledHandler {
    by_stage: BTreeMap<StageId, String>,
    fallback: Option<String>,
}

impl PrefilledHandler {
    pub fn always(answer: impl Into<String>) -> Self {
        Self {
            fallback: Some(answer.into()),
            ..Self::default()
        }
    }

    pub fn with(mut self, stage: StageId, answer: impl Into<String>) -> Self {
        self.by_stage.insert(stage, answer.into());
        self
    }
}

impl ClarificationHandler for PrefilledHandler {
    fn id(&self) -> String {
        "prefilled".into()
    }

    fn ask(&self, request: &ClarificationRequest) -> ClarificationReply {
        self.by_stage
            .get(&request.stage)
            .or(self.fallback.as_ref())
            .map(|a| ClarificationReply::Answer(a.clone()))
            .unwrap_or(ClarificationReply::Park)
    }
}

/// Asks on the terminal. Only one question is shown at a time even when
/// trials run in parallel.
pub struct InteractiveHandler {
    lock: Mutex<()>,
}

impl InteractiveHandler {
    pub fn new() -> Self {
        Self {
            lock: Mutex::new(()),
        }
    }

    pub fn available() -> bool {
        std::io::stdin().is_terminal() && std::io::stderr().is_terminal()
    }
}

impl Default for InteractiveHandler {
    fn default() -> Self {
        Self::new()
    }
}

impl ClarificationHandler for InteractiveHandler {
    fn id(&self) -> String {
        "interactive".into()
    }

    fn ask(&self, request: &ClarificationRequest) -> ClarificationReply {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut err = std::io::stderr();
        let _ = writeln!(err, "\n[{}] {}", request.stage, request.question);
        let _ = write!(err, "answer (empty line to park the run): ");
        let _ = err.flush();
        let mut line = String::new();
        match std::io::stdin().lock().read_line(&mut line) {
            Ok(n) if n > 0 && !line.trim().is_empty() => {
                ClarificationReply::Answer(line.trim().to_string())
            }
            _ => ClarificationReply::Park,
        }
    }
}

pub type ClarifierRegistry = Registry<dyn ClarificationHandler, ()>;

/// `park`, `interactive`, `prefilled:<answer>` and `auto` (interactive when
/// a terminal is attached, park otherwise).
pub fn clarifier_registry() -> ClarifierRegistry {
    let mut reg: ClarifierRegistry = Registry::new("clarifier");
    reg.register("park", |_, _| Ok(Box::new(ParkHandler)));
    reg.register("interactive", |_, _| {
        Ok(Box::new(InteractiveHandler::new()))
    });
    reg.register("prefilled", |answer, _| {
        if answer.trim().is_empty() {
            return Err("prefilled needs an answer: prefilled:<text>".into());
        }
        Ok(Box::new(PrefilledHandler::always(answer)))
    });
    reg.register("auto", |_, _| {
        Ok(if InteractiveHandler::available() {
            Box::new(InteractiveHandler::new()) as Box<dyn ClarificationHandler>
        } else {
            Box::new(ParkHandler)
        })
    });
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefilled_answers_by_stage_then_parks() {
        let h = PrefilledHandler::default().with(StageId::Parameter, "100 steps");
        let ask = |stage| h.ask(&ClarificationRequest::new(stage, "?".into()));
        assert_eq!(
            ask(StageId::Parameter),
            ClarificationReply::Answer("100 steps".into())
        );
        assert_eq!(ask(StageId::Objective), ClarificationReply::Park);
    }

    #[test]
    fn registry_builds_handlers() {
        let reg = clarifier_registry();
        let h = reg.create("prefilled:yes", &()).unwrap();
        assert_eq!(
            h.ask(&ClarificationRequest::new(StageId::Sar, "?".into())),
            ClarificationReply::Answer("yes".into())
        );
        assert!(reg.create("prefilled", &()).is_err());
        assert_eq!(reg.create("park", &()).unwrap().id(), "park");
    }
}

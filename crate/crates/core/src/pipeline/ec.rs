//! Self-confidence scoring of stage outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::CallRef;
use crate::stage::StageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EcMode {
    Off,
    /// Parameter, objective, variable and constraint stages only.
    On,
    /// Every IR stage.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcConfig {
    pub mode: EcMode,
    pub threshold: f64,
    /// Per-stage overrides of `threshold`.
    pub thresholds: BTreeMap<StageId, f64>,
    pub max_reexaminations: u32,
    /// Clarification rounds per stage before the stage is given up.
    pub max_clarifications: u32,
}

impl Default for EcConfig {
    fn default() -> Self {
        Self {
            mode: EcMode::On,
            threshold: 0.7,
            thresholds: BTreeMap::new(),
            max_reexaminations: 2,
            max_clarifications: 1,
        }
    }
}

impl EcConfig {
    pub fn off() -> Self {
        Self {
            mode: EcMode::Off,
            ..Self::default()
        }
    }

    pub fn applies_to(&self, stage: StageId) -> bool {
        match self.mode {
            EcMode::Off => false,
            EcMode::On => stage.is_extraction(),
            EcMode::All => stage != StageId::Coding,
        }
    }

    pub fn threshold_for(&self, stage: StageId) -> f64 {
        self.thresholds
            .get(&stage)
            .copied()
            .unwrap_or(self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reexamine,
    Clarify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub score: f64,
    pub rationale: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    /// Set when the score could not be read; the score is then 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unparseable: Option<String>,
    pub call: CallRef,
}

/// Fields read from a self-check reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReply {
    pub score: Result<f64, String>,
    pub rationale: String,
    pub question: Option<String>,
}

fn field<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    text.lines().find_map(|line| {
        let line = line.trim().trim_start_matches(['*', '-', ' ']);
        let (key, rest) = line.split_once(':')?;
        key.trim_matches(['*', ' '])
            .eq_ignore_ascii_case(name)
            .then(|| rest.trim().trim_matches('*').trim())
    })
}

fn score_value(raw: &str) -> Result<f64, String> {
    let token = raw
        .split(|c: char| c.is_whitespace() || c == '/' || c == ',')
        .next()
        .unwrap_or_default();
    let (number, percent) = match token.strip_suffix('%') {
        Some(n) => (n, true),
        None => (token, false),
    };
    let value: f64 = number
        .parse()
        .map_err(|_| format!("score `{raw}` is not a number"))?;
    let value = if percent { value / 100.0 } else { value };
    if !(0.0..=1.0).contains(&value) {
        return Err(format!("score {value} is outside [0, 1]"));
    }
    Ok(value)
}

pub fn parse_score_reply(text: &str) -> ScoreReply {
    let score = match field(text, "SCORE") {
        Some(raw) => score_value(raw),
        None => Err("no SCORE field".into()),
    };
    let rationale = field(text, "RATIONALE").unwrap_or_default().to_string();
    let question = field(text, "QUESTION")
        .filter(|q| !q.is_empty() && !q.eq_ignore_ascii_case("none"))
        .map(str::to_string);
    ScoreReply {
        score,
        rationale,
        question,
    }
}

/// Verdict for a score given how many re-examinations were already spent.
pub fn verdict_for(score: f64, threshold: f64, reexaminations: u32, max: u32) -> Verdict {
    if score >= threshold {
        Verdict::Accept
    } else if reexaminations < max {
        Verdict::Reexamine
    } else {
        Verdict::Clarify
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_a_delimited_block() {
        let r = parse_score_reply(
            "=====\nSCORE: 0.92\nRATIONALE: all six quantities present\nQUESTION: NONE\n=====",
        );
        assert_eq!(r.score, Ok(0.92));
        assert_eq!(r.rationale, "all six quantities present");
        assert_eq!(r.question, None);
    }

    #[test]
    fn tolerates_markdown_and_percent() {
        let r = parse_score_reply("**Score:** 40%\n**Question:** Is the horizon 100 steps?");
        assert_eq!(r.score, Ok(0.4));
        assert_eq!(r.question.as_deref(), Some("Is the horizon 100 steps?"));
    }

    #[test]
    fn unparseable_scores_are_errors() {
        assert!(parse_score_reply("I am fairly confident.").score.is_err());
        assert!(parse_score_reply("SCORE: high").score.is_err());
        assert!(parse_score_reply("SCORE: 7").score.is_err());
    }

    #[test]
    fn verdicts() {
        assert_eq!(verdict_for(0.92, 0.7, 0, 2), Verdict::Accept);
        assert_eq!(verdict_for(0.7, 0.7, 2, 2), Verdict::Accept);
        assert_eq!(verdict_for(0.4, 0.7, 0, 2), Verdict::Reexamine);
        assert_eq!(verdict_for(0.4, 0.7, 2, 2), Verdict::Clarify);
    }

    #[test]
    fn ec_scope() {
        let on = EcConfig::default();
        assert!(on.applies_to(StageId::Constraint));
        assert!(!on.applies_to(StageId::Sar));
        assert!(!EcConfig::off().applies_to(StageId::Parameter));
        let all = EcConfig {
            mode: EcMode::All,
            ..Default::default()
        };
        assert!(all.applies_to(StageId::Env));
        assert!(!all.applies_to(StageId::Coding));
    }
}

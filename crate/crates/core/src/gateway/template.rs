//! Prompt templates and slot rendering.

use std::collections::BTreeMap;

use crate::ir::{ConstraintSpec, MdpIr};
use crate::stage::StageId;

/// Slot names the stage templates may use.
pub const STAGE_SLOTS: &[&str] = &[
    "description",
    "params",
    "vars",
    "constraints",
    "objective",
    "reward",
    "env",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub body: &'static str,
    slots: &'static [&'static str],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template `{template}` needs `{slot}`, which is not available yet")]
pub struct MissingSlotInput {
    pub template: String,
    pub slot: String,
}

/// Non-stage templates appended to a stage prompt by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Addendum {
    Reask,
    SelfCheck,
    Reexamine,
    Clarification,
    Repair,
    ResultsContract,
}

impl PromptTemplate {
    pub fn for_stage(stage: StageId) -> PromptTemplate {
        macro_rules! asset {
            ($file:literal, $slots:expr) => {
                PromptTemplate {
                    name: stage.as_str(),
                    body: include_str!(concat!("../../assets/prompts/", $file)),
                    slots: $slots,
                }
            };
        }
        match stage {
            StageId::Parameter => asset!("parameter.txt", &["description"]),
            StageId::Objective => asset!("objective.txt", &["description", "params"]),
            StageId::Variable => asset!("variable.txt", &["description", "params"]),
            StageId::Constraint => asset!("constraint.txt", &["description", "params", "vars"]),
            StageId::ObjectiveModeling => asset!(
                "objective_modeling.txt",
                &["description", "params", "vars", "constraints", "objective"]
            ),
            StageId::ConstraintModeling => asset!(
                "constraint_modeling.txt",
                &["description", "params", "vars", "constraints"]
            ),
            StageId::Sar => asset!(
                "sar.txt",
                &["description", "params", "vars", "constraints", "objective"]
            ),
            StageId::Env => asset!(
                "env.txt",
                &[
                    "description",
                    "params",
                    "vars",
                    "reward",
                    "constraints",
                    "objective"
                ]
            ),
            StageId::Coding => asset!(
                "coding.txt",
                &[
                    "env",
                    "params",
                    "vars",
                    "reward",
                    "constraints",
                    "objective"
                ]
            ),
        }
    }

    pub fn addendum(kind: Addendum) -> PromptTemplate {
        macro_rules! asset {
            ($name:literal, $file:literal, $slots:expr) => {
                PromptTemplate {
                    name: $name,
                    body: include_str!(concat!("../../assets/prompts/", $file)),
                    slots: $slots,
                }
            };
        }
        match kind {
            Addendum::Reask => asset!("reask", "reask.txt", &["previous", "feedback"]),
            Addendum::SelfCheck => asset!(
                "self_check",
                "self_check.txt",
                &["description", "task", "extraction"]
            ),
            Addendum::Reexamine => asset!(
                "reexamine",
                "reexamine.txt",
                &["previous", "score", "rationale"]
            ),
            Addendum::Clarification => asset!(
                "clarification",
                "clarification.txt",
                &["question", "answer"]
            ),
            Addendum::Repair => asset!("repair", "repair.txt", &["outcome", "source", "error"]),
            Addendum::ResultsContract => asset!(
                "results_contract",
                "results_contract.txt",
                &["eval_episodes", "seed_list"]
            ),
        }
    }

    /// Slots in order of first appearance in the body.
    pub fn slots(&self) -> Vec<&'static str> {
        let mut found: Vec<(usize, &'static str)> = self
            .slots
            .iter()
            .filter_map(|s| self.body.find(&format!("{{{s}}}")).map(|i| (i, *s)))
            .collect();
        found.sort();
        found.into_iter().map(|(_, s)| s).collect()
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, MissingSlotInput> {
        let mut pieces: Vec<(usize, usize, &str)> = Vec::new();
        for slot in self.slots {
            let token = format!("{{{slot}}}");
            for (at, _) in self.body.match_indices(&token) {
                pieces.push((at, token.len(), slot));
            }
        }
        pieces.sort();
        let mut out = String::with_capacity(self.body.len() + 1024);
        let mut cursor = 0;
        for (at, len, slot) in pieces {
            let value = values.get(slot).ok_or_else(|| MissingSlotInput {
                template: self.name.to_string(),
                slot: slot.to_string(),
            })?;
            out.push_str(&self.body[cursor..at]);
            out.push_str(value);
            cursor = at + len;
        }
        out.push_str(&self.body[cursor..]);
        Ok(out)
    }
}

/// Inputs available for rendering a stage prompt.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub description: &'a str,
    pub ir: &'a MdpIr,
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json values always serialize")
}

/// Value for one slot, rendered in the artifact's persisted JSON form, or
/// `None` when the producing stage has not run yet.
pub fn slot_value(stage: StageId, slot: &str, ctx: &PromptContext<'_>) -> Option<String> {
    let ir = ctx.ir;
    match slot {
        "description" => Some(ctx.description.trim().to_string()),
        "params" if !ir.parameters.is_empty() => {
            Some(pretty(&serde_json::json!({ "PARAMETERS": ir.parameters })))
        }
        "vars" if !ir.variables.is_empty() => {
            let mut doc = serde_json::json!({ "VARIABLES": ir.variables });
            if stage == StageId::Coding {
                let sar = ir.sar.as_ref()?;
                doc["STATE"] = serde_json::to_value(&sar.state).ok()?;
                doc["ACTION"] = serde_json::to_value(&sar.action).ok()?;
            }
            Some(pretty(&doc))
        }
        "constraints" if !ir.constraints.is_empty() => Some(pretty(
            &serde_json::json!({ "CONSTRAINTS": ir.constraints.iter().collect::<Vec<&ConstraintSpec>>() }),
        )),
        "objective" => ir
            .objective
            .as_ref()
            .map(|o| pretty(&serde_json::to_value(o).expect("serializable"))),
        "reward" => ir
            .sar
            .as_ref()
            .map(|s| pretty(&serde_json::to_value(&s.reward).expect("serializable"))),
        "env" => ir
            .env
            .as_ref()
            .map(|e| pretty(&serde_json::to_value(e).expect("serializable"))),
        _ => None,
    }
}

/// Renders the stage template with every slot filled from `ctx`.
pub fn render_prompt(stage: StageId, ctx: &PromptContext<'_>) -> Result<String, MissingSlotInput> {
    let template = PromptTemplate::for_stage(stage);
    let mut values = BTreeMap::new();
    for slot in template.slots() {
        if let Some(v) = slot_value(stage, slot, ctx) {
            values.insert(slot, v);
        }
    }
    template.render(&values)
}

/// Renders an addendum from `(slot, value)` pairs.
pub fn render_addendum(kind: Addendum, values: &[(&str, String)]) -> String {
    let map: BTreeMap<&str, String> = values.iter().cloned().collect();
    PromptTemplate::addendum(kind)
        .render(&map)
        .unwrap_or_else(|e| panic!("addendum rendered without `{}`", e.slot))
}

//! Intermediate representation of an MDP formulation.
//!
//! Each pipeline stage contributes one artifact; [`MdpIr`] accumulates them.
//! Persisted documents use the uppercase key names the stage prompts ask
//! the model for (`SYMBOL`, `SHAPE`, `DEFINITION`, `TYPE`, ...), with a
//! fixed field order so that replayed runs diff byte-for-byte.

mod latex;
mod parse;
mod shape;
mod validate;

use serde::{Deserialize, Serialize};

pub use latex::{extract_latex_symbols, is_camel_identifier};
pub use parse::{parse_structured_block, ParseError, ParseNote, Parsed, PayloadKind, StagePayload};
pub use shape::{parse_shape, shape_from_json, DimExpr, DimTerm, ShapeExpr, ShapeSyntaxError};
pub use validate::{
    validate_ir, validate_with, SymbolPolicy, ValidationReport, Violation, Warning,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Int,
    Float,
    Binary,
}

impl ParamType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "int" | "integer" => Some(Self::Int),
            "float" | "real" => Some(Self::Float),
            "binary" | "bool" => Some(Self::Binary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDecl {
    #[serde(rename = "SYMBOL")]
    pub symbol: String,
    #[serde(rename = "SHAPE")]
    pub shape: ShapeExpr,
    #[serde(rename = "DEFINITION")]
    pub definition: String,
    #[serde(rename = "TYPE")]
    pub ty: ParamType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDecl {
    #[serde(rename = "SYMBOL")]
    pub symbol: String,
    #[serde(rename = "SHAPE")]
    pub shape: ShapeExpr,
    #[serde(rename = "DEFINITION")]
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    #[serde(rename = "PROSE")]
    pub prose: String,
    #[serde(rename = "FORMULA", default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    #[serde(rename = "PROSE")]
    pub prose: String,
    #[serde(rename = "FORMULA", default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    #[serde(rename = "DESCRIPTION", default)]
    pub description: String,
    #[serde(rename = "VARIABLES")]
    pub variables: Vec<String>,
    #[serde(rename = "SHAPE")]
    pub shape: ShapeExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    #[serde(rename = "DESCRIPTION", default)]
    pub description: String,
    #[serde(rename = "VARIABLES")]
    pub variables: Vec<String>,
    #[serde(rename = "SHAPE")]
    pub shape: ShapeExpr,
    #[serde(rename = "TYPE")]
    pub kind: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    #[serde(rename = "DESCRIPTION", default)]
    pub prose: String,
    #[serde(rename = "FORMULA", default)]
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarSpec {
    #[serde(rename = "STATE")]
    pub state: StateSpec,
    #[serde(rename = "ACTION")]
    pub action: ActionSpec,
    #[serde(rename = "REWARD")]
    pub reward: RewardSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    Prebuilt,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(rename = "MODE")]
    pub mode: EnvMode,
    #[serde(
        rename = "PREBUILT_ID",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub prebuilt_id: Option<String>,
    #[serde(rename = "TRANSITION_LOGIC", default)]
    pub transition_logic: String,
    #[serde(rename = "TERMINATION", default)]
    pub termination: String,
}

/// The accumulated formulation. Stages fill it in order, so any prefix of
/// the fields may be present; [`MdpIr::is_complete`] tells whether every
/// stage through the environment stage has contributed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MdpIr {
    #[serde(rename = "PARAMETERS", default)]
    pub parameters: Vec<ParameterDecl>,
    #[serde(rename = "VARIABLES", default)]
    pub variables: Vec<VariableDecl>,
    #[serde(rename = "OBJECTIVE", default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(rename = "CONSTRAINTS", default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(rename = "SAR", default, skip_serializing_if = "Option::is_none")]
    pub sar: Option<SarSpec>,
    #[serde(
        rename = "ENVIRONMENT",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub env: Option<EnvSpec>,
}

impl MdpIr {
    pub fn is_complete(&self) -> bool {
        self.objective.as_ref().is_some_and(|o| o.formula.is_some())
            && self.constraints.iter().all(|c| c.formula.is_some())
            && self.sar.is_some()
            && self.env.is_some()
    }

    pub fn parameter(&self, symbol: &str) -> Option<&ParameterDecl> {
        self.parameters.iter().find(|p| p.symbol == symbol)
    }

    /// Declared symbols in declaration order, parameters first.
    pub fn declared_symbols(&self) -> impl Iterator<Item = &str> {
        self.parameters
            .iter()
            .map(|p| p.symbol.as_str())
            .chain(self.variables.iter().map(|v| v.symbol.as_str()))
    }

    /// Every stored formula with a label naming where it lives.
    pub fn formulas(&self) -> Vec<(String, &str)> {
        let mut out = Vec::new();
        if let Some(f) = self.objective.as_ref().and_then(|o| o.formula.as_deref()) {
            out.push(("objective".to_string(), f));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if let Some(f) = c.formula.as_deref() {
                out.push((format!("constraint[{i}]"), f));
            }
        }
        if let Some(sar) = &self.sar {
            if !sar.reward.formula.is_empty() {
                out.push(("reward".to_string(), sar.reward.formula.as_str()));
            }
        }
        out
    }
}

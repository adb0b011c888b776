use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ir::PayloadKind;

/// The agents of the pipeline, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    Parameter,
    Objective,
    Variable,
    Constraint,
    ObjectiveModeling,
    ConstraintModeling,
    Sar,
    Env,
    Coding,
}

impl StageId {
    pub const ALL: [StageId; 9] = [
        StageId::Parameter,
        StageId::Objective,
        StageId::Variable,
        StageId::Constraint,
        StageId::ObjectiveModeling,
        StageId::ConstraintModeling,
        StageId::Sar,
        StageId::Env,
        StageId::Coding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::Parameter => "parameter",
            StageId::Objective => "objective",
            StageId::Variable => "variable",
            StageId::Constraint => "constraint",
            StageId::ObjectiveModeling => "objective_modeling",
            StageId::ConstraintModeling => "constraint_modeling",
            StageId::Sar => "sar",
            StageId::Env => "env",
            StageId::Coding => "coding",
        }
    }

    /// Stages whose outputs this stage's prompt consumes.
    pub fn dependencies(self) -> &'static [StageId] {
        use StageId::*;
        match self {
            Parameter => &[],
            Objective => &[Parameter],
            Variable => &[Parameter, Objective],
            Constraint => &[Parameter, Variable],
            ObjectiveModeling => &[Parameter, Variable, Constraint, Objective],
            ConstraintModeling => &[Parameter, Variable, Constraint],
            Sar => &[
                Parameter,
                Objective,
                Variable,
                Constraint,
                ObjectiveModeling,
                ConstraintModeling,
            ],
            Env => &[
                Parameter,
                Objective,
                Variable,
                Constraint,
                ObjectiveModeling,
                ConstraintModeling,
                Sar,
            ],
            Coding => &[
                Parameter,
                Objective,
                Variable,
                Constraint,
                ObjectiveModeling,
                ConstraintModeling,
                Sar,
                Env,
            ],
        }
    }

    /// Payload framing for stages that produce IR; `None` for coding.
    pub fn payload_kind(self) -> Option<PayloadKind> {
        Some(match self {
            StageId::Parameter => PayloadKind::Parameters,
            StageId::Objective => PayloadKind::Objective,
            StageId::Variable => PayloadKind::Variables,
            StageId::Constraint => PayloadKind::Constraints,
            StageId::ObjectiveModeling => PayloadKind::ObjectiveFormula,
            StageId::ConstraintModeling => PayloadKind::ConstraintFormulas,
            StageId::Sar => PayloadKind::Sar,
            StageId::Env => PayloadKind::Env,
            StageId::Coding => return None,
        })
    }

    /// Extraction stages: long input, short output. Self-checking is on by
    /// default for these.
    pub fn is_extraction(self) -> bool {
        matches!(
            self,
            StageId::Parameter | StageId::Objective | StageId::Variable | StageId::Constraint
        )
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage `{0}`")]
pub struct UnknownStage(pub String);

impl FromStr for StageId {
    type Err = UnknownStage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageId::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| UnknownStage(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_stage_has_no_prerequisites() {
        assert!(StageId::Parameter.dependencies().is_empty());
    }

    #[test]
    fn objective_modeling_needs_constraints() {
        assert!(StageId::ObjectiveModeling
            .dependencies()
            .contains(&StageId::Constraint));
    }

    #[test]
    fn execution_order_is_a_topological_sort() {
        for (i, stage) in StageId::ALL.iter().enumerate() {
            for dep in stage.dependencies() {
                let j = StageId::ALL.iter().position(|s| s == dep).unwrap();
                assert!(j < i, "{dep} must precede {stage}");
            }
        }
    }

    #[test]
    fn late_stages_depend_on_everything_before_them() {
        for stage in [StageId::Sar, StageId::Env, StageId::Coding] {
            let idx = StageId::ALL.iter().position(|s| *s == stage).unwrap();
            assert_eq!(stage.dependencies(), &StageId::ALL[..idx]);
        }
    }

    #[test]
    fn names_round_trip() {
        for stage in StageId::ALL {
            assert_eq!(stage.as_str().parse::<StageId>().unwrap(), stage);
        }
        assert!("modeling".parse::<StageId>().is_err());
    }
}

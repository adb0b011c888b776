//! Stage artifacts: the persisted per-stage documents and their effect on
//! the accumulated IR.

use serde_json::{json, Value};

use crate::ir::{ConstraintSpec, MdpIr, ObjectiveSpec, StagePayload, Violation};
use crate::stage::StageId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArtifactError {
    #[error("{stage} artifact is malformed: {reason}")]
    Malformed { stage: StageId, reason: String },
    #[error("{stage} artifact needs the {missing} stage first")]
    OutOfOrder { stage: StageId, missing: StageId },
    #[error("{0}")]
    Violation(Violation),
}

/// Folds a parsed payload into the IR. Fails when the payload cannot be
/// attached at all (e.g. a formula count that does not match the
/// constraints); everything else is left to validation.
pub fn apply_payload(
    ir: &mut MdpIr,
    stage: StageId,
    payload: StagePayload,
) -> Result<(), ArtifactError> {
    match payload {
        StagePayload::Parameters(p) => ir.parameters = p,
        StagePayload::Objective(prose) => {
            ir.objective = Some(ObjectiveSpec {
                prose,
                formula: None,
            })
        }
        StagePayload::Variables(v) => ir.variables = v,
        StagePayload::Constraints(items) => {
            ir.constraints = items
                .into_iter()
                .map(|prose| ConstraintSpec {
                    prose,
                    formula: None,
                })
                .collect()
        }
        StagePayload::ObjectiveFormula(f) => {
            let objective = ir.objective.as_mut().ok_or(ArtifactError::OutOfOrder {
                stage,
                missing: StageId::Objective,
            })?;
            objective.formula = Some(f);
        }
        StagePayload::ConstraintFormulas(fs) => {
            if fs.len() != ir.constraints.len() {
                return Err(ArtifactError::Violation(Violation::FormulaCountMismatch {
                    constraints: ir.constraints.len(),
                    formulas: fs.len(),
                }));
            }
            for (c, f) in ir.constraints.iter_mut().zip(fs) {
                c.formula = Some(f);
            }
        }
        StagePayload::Sar(s) => ir.sar = Some(s),
        StagePayload::Env(e) => ir.env = Some(e),
    }
    Ok(())
}

/// The persisted document for an IR stage, read back from the IR.
pub fn stage_artifact(ir: &MdpIr, stage: StageId) -> Option<Value> {
    Some(match stage {
        StageId::Parameter => json!({ "PARAMETERS": ir.parameters }),
        StageId::Objective => json!({ "OBJECTIVE": ir.objective.as_ref()?.prose }),
        StageId::Variable => json!({ "VARIABLES": ir.variables }),
        StageId::Constraint => {
            let prose: Vec<&str> = ir.constraints.iter().map(|c| c.prose.as_str()).collect();
            json!({ "CONSTRAINTS": prose })
        }
        StageId::ObjectiveModeling => {
            json!({ "FORMULA": ir.objective.as_ref()?.formula.as_ref()? })
        }
        StageId::ConstraintModeling => {
            let formulas: Option<Vec<&str>> = ir
                .constraints
                .iter()
                .map(|c| c.formula.as_deref())
                .collect();
            json!({ "FORMULAS": formulas? })
        }
        StageId::Sar => serde_json::to_value(ir.sar.as_ref()?).ok()?,
        StageId::Env => serde_json::to_value(ir.env.as_ref()?).ok()?,
        StageId::Coding => return None,
    })
}

/// Inverse of [`stage_artifact`].
pub fn apply_artifact(ir: &mut MdpIr, stage: StageId, doc: &Value) -> Result<(), ArtifactError> {
    let malformed = |reason: String| ArtifactError::Malformed { stage, reason };
    let field = |key: &str| {
        doc.get(key)
            .cloned()
            .ok_or_else(|| malformed(format!("missing `{key}`")))
    };
    fn de<T: serde::de::DeserializeOwned>(
        v: Value,
        err: impl Fn(String) -> ArtifactError,
    ) -> Result<T, ArtifactError> {
        serde_json::from_value(v).map_err(|e| err(e.to_string()))
    }
    let payload = match stage {
        StageId::Parameter => StagePayload::Parameters(de(field("PARAMETERS")?, malformed)?),
        StageId::Objective => StagePayload::Objective(de(field("OBJECTIVE")?, malformed)?),
        StageId::Variable => StagePayload::Variables(de(field("VARIABLES")?, malformed)?),
        StageId::Constraint => StagePayload::Constraints(de(field("CONSTRAINTS")?, malformed)?),
        StageId::ObjectiveModeling => {
            StagePayload::ObjectiveFormula(de(field("FORMULA")?, malformed)?)
        }
        StageId::ConstraintModeling => {
            StagePayload::ConstraintFormulas(de(field("FORMULAS")?, malformed)?)
        }
        StageId::Sar => StagePayload::Sar(de(doc.clone(), malformed)?),
        StageId::Env => StagePayload::Env(de(doc.clone(), malformed)?),
        StageId::Coding => return Err(malformed("coding has no IR artifact".into())),
    };
    apply_payload(ir, stage, payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_shape, ParamType, ParameterDecl};

    fn sample() -> MdpIr {
        let mut ir = MdpIr::default();
        ir.parameters.push(ParameterDecl {
            symbol: "NumberOfUsers".into(),
            shape: parse_shape("[]").unwrap(),
            definition: "users".into(),
            ty: ParamType::Int,
        });
        apply_payload(
            &mut ir,
            StageId::Objective,
            StagePayload::Objective("maximize throughput".into()),
        )
        .unwrap();
        apply_payload(
            &mut ir,
            StageId::Constraint,
            StagePayload::Constraints(vec!["one user per step".into()]),
        )
        .unwrap();
        ir
    }

    #[test]
    fn formula_count_must_match_constraints() {
        let mut ir = sample();
        let err = apply_payload(
            &mut ir,
            StageId::ConstraintModeling,
            StagePayload::ConstraintFormulas(vec!["a".into(), "b".into()]),
        )
        .unwrap_err();
        assert_eq!(
            err,
            ArtifactError::Violation(Violation::FormulaCountMismatch {
                constraints: 1,
                formulas: 2
            })
        );
    }

    #[test]
    fn artifacts_round_trip_into_the_ir() {
        let mut ir = sample();
        apply_payload(
            &mut ir,
            StageId::ObjectiveModeling,
            StagePayload::ObjectiveFormula(r"\max \sum_t R_t".into()),
        )
        .unwrap();
        apply_payload(
            &mut ir,
            StageId::ConstraintModeling,
            StagePayload::ConstraintFormulas(vec![r"\sum_i a_i = 1".into()]),
        )
        .unwrap();
        let mut rebuilt = MdpIr::default();
        for stage in &StageId::ALL[..6] {
            if let Some(doc) = stage_artifact(&ir, *stage) {
                apply_artifact(&mut rebuilt, *stage, &doc).unwrap();
            }
        }
        assert_eq!(rebuilt, ir);
    }

    #[test]
    fn formula_before_objective_is_out_of_order() {
        let mut ir = MdpIr::default();
        let err = apply_artifact(
            &mut ir,
            StageId::ObjectiveModeling,
            &json!({ "FORMULA": "x" }),
        )
        .unwrap_err();
        assert!(matches!(err, ArtifactError::OutOfOrder { .. }));
    }
}

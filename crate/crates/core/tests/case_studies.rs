mod support;

use nl2rl_core::ir::{validate_ir, Warning};
use nl2rl_core::stage::StageId;
use support::{load_case_study, TASKS};

#[test]
fn every_case_study_validates_clean() {
    for task in TASKS {
        let ir = load_case_study(task);
        let report = validate_ir(&ir);
        assert!(report.is_clean(), "{task}: {:#?}", report.violations);
        assert!(ir.is_complete(), "{task}");
    }
}

#[test]
fn drone_state_shape_keeps_free_package_count() {
    let ir = load_case_study("drone-delivery");
    let sar = ir.sar.as_ref().unwrap();
    assert_eq!(sar.state.shape.to_string(), "[1 + 2 + n + n]");
    assert_eq!(sar.state.shape.rank(), 1);
    assert!(sar.action.variables.is_empty());
    let report = validate_ir(&ir);
    assert!(report.warnings.iter().any(|w| matches!(
        w,
        Warning::LowercaseSymbol { symbol, .. } if symbol == "n"
    )));
}

#[test]
fn tolerated_drift_is_reported_as_warnings() {
    let cart = validate_ir(&load_case_study("cart-pole"));
    assert!(cart.warnings.iter().any(|w| matches!(
        w,
        Warning::AliasedSymbol { alias, target, .. } if alias == "MaxCartVelocity" && target == "CartMaxVelocity"
    )));
    assert!(cart.warnings.iter().any(|w| matches!(
        w,
        Warning::LowercaseSymbol { symbol, .. } if symbol == "force"
    )));
    let inventory = validate_ir(&load_case_study("inventory"));
    assert!(inventory.warnings.iter().any(|w| matches!(
        w,
        Warning::DerivedQuantity { symbol, .. } if symbol == "PenaltyCost"
    )));
}

#[test]
fn one_formula_per_constraint() {
    for task in TASKS {
        let ir = load_case_study(task);
        assert!(ir.constraints.iter().all(|c| c.formula.is_some()), "{task}");
    }
    assert_eq!(load_case_study("cart-pole").constraints.len(), 7);
    assert_eq!(load_case_study("wireless").constraints.len(), 7);
    assert_eq!(load_case_study("inventory").constraints.len(), 4);
}

#[test]
fn objective_blocks_are_delimited() {
    for task in TASKS {
        let dir = support::case_study_dir(task);
        for stage in [StageId::Objective, StageId::ObjectiveModeling] {
            let text = std::fs::read_to_string(dir.join(format!("{stage}.txt"))).unwrap();
            assert!(text.starts_with("=====") && text.trim_end().ends_with("====="));
        }
    }
}

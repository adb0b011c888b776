//! Trial verdicts and their aggregation.

mod policy;
mod rates;
mod report;

use serde::{Deserialize, Serialize};

use crate::ir::{validate_with, SymbolPolicy};
use crate::pipeline::ir_stages;
use crate::record::RunRecord;

pub use policy::{
    compare_to_oracle, converged, judge_policy, load_oracle, matched_returns, mean,
    policy_rule_registry, variance, Completion, EvaluationError, OracleComparison, OracleRatio,
    PolicyCriterion, PolicyJudgement, PolicyRule, PolicyRuleRegistry, Threshold,
};
pub use rates::{
    failure_distribution, success_rates, EmptyTrialSet, FailureDistribution, Fraction, Group,
    SuccessTriplet,
};
pub use report::{Report, TaskRow};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Evidence {
    pub modeling: Vec<String>,
    pub coding: Vec<String>,
    pub policy: Vec<String>,
}

/// Verdicts of one trial; the content of `outcome.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    #[serde(rename = "M")]
    pub m: bool,
    #[serde(rename = "C")]
    pub c: bool,
    #[serde(rename = "P")]
    pub p: bool,
    /// Coding success read as "ran to completion with valid results".
    #[serde(rename = "C_strict")]
    pub c_strict: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub modeling_overridden: bool,
    pub evidence: Evidence,
}

impl TrialOutcome {
    pub fn new(m: bool, c: bool, p: bool, c_strict: bool) -> Self {
        Self {
            m,
            c,
            p,
            c_strict,
            modeling_overridden: false,
            evidence: Evidence::default(),
        }
    }

    /// A trial that crashed before producing verdicts.
    pub fn crashed(reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Self {
            evidence: Evidence {
                modeling: vec![reason.clone()],
                coding: vec![reason.clone()],
                policy: vec![reason],
            },
            ..Self::new(false, false, false, false)
        }
    }

    pub fn triple(&self) -> (bool, bool, bool) {
        (self.m, self.c, self.p)
    }
}

/// Manual modeling verdict stored in a run record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelingOverride {
    pub verdict: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelingJudgement {
    pub passed: bool,
    pub overridden: bool,
    pub evidence: Vec<String>,
}

/// Complete through the environment stage and free of violations, unless a
/// human override says otherwise.
pub fn judge_modeling(record: &RunRecord, policy: &SymbolPolicy) -> ModelingJudgement {
    let mut evidence = Vec::new();
    let missing: Vec<String> = ir_stages()
        .filter(|s| !record.completed(*s))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        evidence.push(format!(
            "stages without an accepted artifact: {}",
            missing.join(", ")
        ));
    }
    let report = validate_with(&record.ir, policy);
    evidence.extend(report.violations.iter().map(|v| v.to_string()));
    let mut passed = missing.is_empty() && report.is_clean();
    if passed {
        evidence.push(format!(
            "all stages accepted; {} warning(s)",
            report.warnings.len()
        ));
    }
    let mut overridden = false;
    if let Some(o) = &record.modeling_override {
        log::warn!(
            "run {}: modeling verdict overridden to {} ({})",
            record.run_id,
            o.verdict,
            o.reason
        );
        evidence.push(format!(
            "overridden to {} by a human: {}",
            o.verdict, o.reason
        ));
        passed = o.verdict;
        overridden = true;
    }
    ModelingJudgement {
        passed,
        overridden,
        evidence,
    }
}

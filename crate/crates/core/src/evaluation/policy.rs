//! Policy-success rules.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::codegen::TrainingResults;
use crate::registry::{Registry, RegistryError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluationError {
    #[error("criterion `{rule}` needs oracle results, none configured")]
    MissingOracle { rule: String },
    #[error("cannot load oracle results {path}: {message}")]
    OracleUnreadable { path: String, message: String },
    #[error("policy and oracle were evaluated on different episodes: {0}")]
    SeedMismatch(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// One task's policy criterion, normally an `[evaluation.criteria.<task>]`
/// table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCriterion {
    /// `threshold`, `oracle_ratio` or `completion`.
    pub rule: String,
    /// Threshold value, ratio, or required completion fraction.
    pub value: f64,
    /// Oracle results file: a path, or `builtin:<name>` for a bundled one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
}

impl PolicyCriterion {
    pub fn threshold(value: f64) -> Self {
        Self {
            rule: "threshold".into(),
            value,
            oracle: None,
        }
    }

    pub fn oracle_ratio(value: f64, oracle: &str) -> Self {
        Self {
            rule: "oracle_ratio".into(),
            value,
            oracle: Some(oracle.into()),
        }
    }

    pub fn completion(value: f64) -> Self {
        Self {
            rule: "completion".into(),
            value,
            oracle: None,
        }
    }

    /// Default criterion of a bundled task.
    pub fn default_for(task: &str) -> Option<Self> {
        Some(match task {
            "cart-pole" => Self::threshold(400.0),
            "mountain-car" => Self::threshold(-130.0),
            "wireless" => Self::oracle_ratio(0.9, "builtin:wireless-greedy"),
            "drone-delivery" => Self::completion(0.5),
            "inventory" => Self::oracle_ratio(1.1, "builtin:inventory-do-nothing"),
            _ => return None,
        })
    }
}

const BUILTIN_ORACLES: &[(&str, &str)] = &[
    (
        "wireless-greedy",
        include_str!("../../assets/oracles/wireless-greedy.json"),
    ),
    (
        "inventory-do-nothing",
        include_str!("../../assets/oracles/inventory-do-nothing.json"),
    ),
];

/// Loads oracle results from a path or a `builtin:<name>` reference.
pub fn load_oracle(reference: &str) -> Result<TrainingResults, EvaluationError> {
    let unreadable = |message: String| EvaluationError::OracleUnreadable {
        path: reference.to_string(),
        message,
    };
    let text = match reference.strip_prefix("builtin:") {
        Some(name) => BUILTIN_ORACLES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| unreadable("no such bundled oracle".into()))?,
        None => std::fs::read_to_string(PathBuf::from(reference))
            .map_err(|e| unreadable(e.to_string()))?,
    };
    TrainingResults::parse(&text).map_err(unreadable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyJudgement {
    pub passed: bool,
    pub evidence: Vec<String>,
}

pub trait PolicyRule: Send + Sync {
    fn id(&self) -> String;
    fn judge(&self, results: &TrainingResults) -> Result<PolicyJudgement, EvaluationError>;
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>())
}

/// Mean of the last tenth of the training curve is at least the mean of
/// the first tenth (at least one episode each).
pub fn converged(episode_returns: &[f64]) -> (bool, String) {
    let n = episode_returns.len();
    if n == 0 {
        return (false, "no training episodes".into());
    }
    let k = n.div_ceil(10).max(1);
    let first = mean(&episode_returns[..k]);
    let last = mean(&episode_returns[n - k..]);
    (
        last >= first,
        format!("convergence: last {k} episodes mean {last:.3} vs first {k} mean {first:.3}"),
    )
}

pub struct Threshold(pub f64);

impl PolicyRule for Threshold {
    fn id(&self) -> String {
        format!("threshold:{}", self.0)
    }

    fn judge(&self, results: &TrainingResults) -> Result<PolicyJudgement, EvaluationError> {
        let m = mean(&results.eval_returns);
        Ok(PolicyJudgement {
            passed: m >= self.0,
            evidence: vec![format!(
                "mean eval return {m:.3} over {} episodes vs threshold {}",
                results.eval_returns.len(),
                self.0
            )],
        })
    }
}

/// Returns evaluated on the same episodes, paired up.
pub fn matched_returns(
    policy: &TrainingResults,
    oracle: &TrainingResults,
) -> Result<Vec<(f64, f64)>, EvaluationError> {
    match (&policy.eval_seeds, &oracle.eval_seeds) {
        (Some(ps), Some(os)) => {
            let pairs: Vec<(f64, f64)> = ps
                .iter()
                .zip(&policy.eval_returns)
                .filter_map(|(seed, p)| {
                    os.iter()
                        .position(|s| s == seed)
                        .map(|j| (*p, oracle.eval_returns[j]))
                })
                .collect();
            if pairs.len() != ps.len() {
                return Err(EvaluationError::SeedMismatch(format!(
                    "{} of {} policy seeds have oracle episodes",
                    pairs.len(),
                    ps.len()
                )));
            }
            Ok(pairs)
        }
        _ if policy.eval_returns.len() == oracle.eval_returns.len()
            && !policy.eval_returns.is_empty() =>
        {
            Ok(policy
                .eval_returns
                .iter()
                .copied()
                .zip(oracle.eval_returns.iter().copied())
                .collect())
        }
        _ => Err(EvaluationError::SeedMismatch(format!(
            "{} policy episodes vs {} oracle episodes",
            policy.eval_returns.len(),
            oracle.eval_returns.len()
        ))),
    }
}

pub struct OracleRatio {
    pub ratio: f64,
    pub oracle: TrainingResults,
}

impl PolicyRule for OracleRatio {
    fn id(&self) -> String {
        format!("oracle_ratio:{}", self.ratio)
    }

    fn judge(&self, results: &TrainingResults) -> Result<PolicyJudgement, EvaluationError> {
        let pairs = matched_returns(results, &self.oracle)?;
        let policy = mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let oracle = mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        // ratio x oracle for positive oracle means; stays meaningful for
        // negative ones (a cost baseline).
        let bar = oracle + (self.ratio - 1.0) * oracle.abs();
        // ratio - 1.0 is inexact; a policy sitting on the bar passes.
        let slack = 1e-9 * bar.abs().max(1.0);
        Ok(PolicyJudgement {
            passed: policy >= bar - slack,
            evidence: vec![format!(
                "mean eval return {policy:.3} vs {:.2} x oracle mean {oracle:.3} (bar {bar:.3}, {} matched episodes)",
                self.ratio,
                pairs.len()
            )],
        })
    }
}

pub struct Completion(pub f64);

impl PolicyRule for Completion {
    fn id(&self) -> String {
        format!("completion:{}", self.0)
    }

    fn judge(&self, results: &TrainingResults) -> Result<PolicyJudgement, EvaluationError> {
        let Some(done) = results.eval_completed.as_ref().filter(|d| !d.is_empty()) else {
            return Ok(PolicyJudgement {
                passed: false,
                evidence: vec!["results carry no eval_completed flags".into()],
            });
        };
        let hits = done.iter().filter(|d| **d).count();
        let share = hits as f64 / done.len() as f64;
        Ok(PolicyJudgement {
            passed: share >= self.0,
            evidence: vec![format!(
                "{hits} of {} eval episodes completed the task (required share {})",
                done.len(),
                self.0
            )],
        })
    }
}

pub type PolicyRuleRegistry = Registry<dyn PolicyRule, PolicyCriterion>;

pub fn policy_rule_registry() -> PolicyRuleRegistry {
    let mut reg: PolicyRuleRegistry = Registry::new("policy rule");
    reg.register("threshold", |_, c| Ok(Box::new(Threshold(c.value))));
    reg.register("completion", |_, c| {
        if !(0.0..=1.0).contains(&c.value) {
            return Err(format!("completion share {} is outside [0, 1]", c.value));
        }
        Ok(Box::new(Completion(c.value)))
    });
    reg.register("oracle_ratio", |_, c| {
        let reference = c
            .oracle
            .as_deref()
            .ok_or_else(|| "oracle_ratio needs an `oracle` results file".to_string())?;
        let oracle = load_oracle(reference).map_err(|e| e.to_string())?;
        Ok(Box::new(OracleRatio {
            ratio: c.value,
            oracle,
        }))
    });
    reg
}

/// Applies the criterion and the convergence check.
pub fn judge_policy(
    results: &TrainingResults,
    criterion: &PolicyCriterion,
) -> Result<PolicyJudgement, EvaluationError> {
    if criterion.rule == "oracle_ratio" && criterion.oracle.is_none() {
        return Err(EvaluationError::MissingOracle {
            rule: criterion.rule.clone(),
        });
    }
    let rule = policy_rule_registry().create(&criterion.rule, criterion)?;
    let mut judgement = rule.judge(results)?;
    let (ok, evidence) = converged(&results.episode_returns);
    judgement.passed &= ok;
    judgement.evidence.push(evidence);
    Ok(judgement)
}

/// Policy versus oracle on matched episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub mean_ratio: f64,
    /// `None` where the oracle return is zero.
    pub per_episode: Vec<Option<f64>>,
    pub policy_mean: f64,
    pub oracle_mean: f64,
    pub policy_variance: f64,
    pub oracle_variance: f64,
}

pub fn compare_to_oracle(
    policy: &TrainingResults,
    oracle: &TrainingResults,
) -> Result<OracleComparison, EvaluationError> {
    let pairs = matched_returns(policy, oracle)?;
    let ps: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let os: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (policy_mean, oracle_mean) = (mean(&ps), mean(&os));
    Ok(OracleComparison {
        mean_ratio: policy_mean / oracle_mean,
        per_episode: pairs
            .iter()
            .map(|(p, o)| (*o != 0.0).then(|| p / o))
            .collect(),
        policy_mean,
        oracle_mean,
        policy_variance: variance(&ps),
        oracle_variance: variance(&os),
    })
}

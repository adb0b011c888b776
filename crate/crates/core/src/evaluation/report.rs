//! Markdown and CSV tables over aggregated trials.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::rates::{failure_distribution, success_rates, FailureDistribution, SuccessTriplet};
use super::{EmptyTrialSet, TrialOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task: String,
    pub trials: usize,
    pub rates: SuccessTriplet,
    pub distribution: FailureDistribution,
}

impl TaskRow {
    pub fn from_trials(task: &str, trials: &[TrialOutcome]) -> Result<Self, EmptyTrialSet> {
        Ok(Self {
            task: task.to_string(),
            trials: trials.len(),
            rates: success_rates(trials)?,
            distribution: failure_distribution(trials)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub label: String,
    pub rows: Vec<TaskRow>,
}

fn shares<const N: usize>(g: &super::rates::Group<N>) -> [String; N] {
    match g.shares() {
        Some(s) => s.map(|f| f.fixed2()),
        None => std::array::from_fn(|_| "-".to_string()),
    }
}

impl Report {
    pub fn markdown(&self) -> String {
        let mut out = String::new();
        let title = if self.label.is_empty() {
            "Results".to_string()
        } else {
            format!("Results: {}", self.label)
        };
        let _ = writeln!(out, "# {title}\n");
        let _ = writeln!(out, "## Success rates (modeling / coding / policy)\n");
        let _ = writeln!(out, "| Task | Trials | M / C / P | C (completed) |");
        let _ = writeln!(out, "|---|---:|:---:|---:|");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                r.task,
                r.trials,
                r.rates.display(),
                r.rates.coding_strict.fixed2()
            );
        }
        let _ = writeln!(out, "\n## Failure decomposition\n");
        let _ = writeln!(
            out,
            "Each group is normalized on its own; `-` marks an empty group.\n"
        );
        let _ = writeln!(
            out,
            "| Task | P∘: M∘ | P∘: M× | P×: M∘C∘ | P×: M∘C× | P×: M×C∘ | P×: M×C× |"
        );
        let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|---:|");
        for r in &self.rows {
            let [a, b] = shares(&r.distribution.p_success);
            let [c, d, e, f] = shares(&r.distribution.p_failure);
            let _ = writeln!(out, "| {} | {a} | {b} | {c} | {d} | {e} | {f} |", r.task);
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(
            "task,trials,modeling,coding,policy,coding_completed,\
             ps_m_ok,ps_m_fail,pf_m_ok_c_ok,pf_m_ok_c_fail,pf_m_fail_c_ok,pf_m_fail_c_fail\n",
        );
        for r in &self.rows {
            let blank = |s: String| if s == "-" { String::new() } else { s };
            let ps = shares(&r.distribution.p_success).map(blank);
            let pf = shares(&r.distribution.p_failure).map(blank);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.task,
                r.trials,
                r.rates.modeling.fixed2(),
                r.rates.coding.fixed2(),
                r.rates.policy.fixed2(),
                r.rates.coding_strict.fixed2(),
                ps.join(","),
                pf.join(",")
            );
        }
        out
    }
}

//! Run configuration, normally read from a TOML file.
//!
//! ```toml
//! [backend]
//! endpoint = "https://api.openai.com/v1"
//! model = "gpt-4o"
//! credential_env = "OPENAI_API_KEY"
//!
//! [pipeline]
//! max_reasks = 2
//! ec = { mode = "on", threshold = 0.7, max_reexaminations = 2 }
//!
//! [codegen]
//! shim = ["python3", "-m", "rl_runtime_kit.shim"]
//! max_attempts = 3
//! limits = { timeout_secs = 300.0 }
//!
//! [evaluation.criteria.cart-pole]
//! rule = "threshold"
//! value = 400.0
//!
//! [bench]
//! trials = 20
//! parallelism = 4
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codegen::{EvalProtocol, ExecLimits, Executor, DEFAULT_MAX_ATTEMPTS};
use crate::evaluation::PolicyCriterion;
use crate::gateway::GatewayConfig;
use crate::ir::SymbolPolicy;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodegenConfig {
    /// Command prefix of the runtime shim; the entrypoint path is appended.
    pub shim: Vec<String>,
    /// Extra environment variables for executed code.
    pub env: BTreeMap<String, String>,
    pub max_attempts: u32,
    pub limits: ExecLimits,
    pub protocol: EvalProtocol,
}

impl Default for CodegenConfig {
    fn default() -> Self {
        Self {
            shim: Executor::default().shim,
            env: BTreeMap::new(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            limits: ExecLimits::default(),
            protocol: EvalProtocol::default(),
        }
    }
}

impl CodegenConfig {
    pub fn executor(&self) -> Executor {
        Executor {
            shim: self.shim.clone(),
            env: self
                .env
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Overrides of the per-task default criteria.
    pub criteria: BTreeMap<String, PolicyCriterion>,
}

impl EvaluationConfig {
    pub fn criterion(&self, task: &str) -> Option<PolicyCriterion> {
        self.criteria
            .get(task)
            .cloned()
            .or_else(|| PolicyCriterion::default_for(task))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub tasks: Vec<String>,
    pub trials: u32,
    pub parallelism: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            tasks: crate::tasks::bundled_ids().map(str::to_string).collect(),
            trials: 20,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub backend: GatewayConfig,
    pub pipeline: PipelineConfig,
    pub codegen: CodegenConfig,
    pub evaluation: EvaluationConfig,
    pub symbols: SymbolPolicy,
    pub bench: BenchConfig,
    /// Where run directories are created.
    pub runs_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::from_toml(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.check().map_err(|message| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), String> {
        let ec = &self.pipeline.ec;
        if !(0.0..=1.0).contains(&ec.threshold) {
            return Err(format!("ec threshold {} is outside [0, 1]", ec.threshold));
        }
        if self.codegen.max_attempts == 0 {
            return Err("codegen.max_attempts must be at least 1".into());
        }
        if self.codegen.shim.is_empty() {
            return Err("codegen.shim must name a command".into());
        }
        for (task, c) in &self.evaluation.criteria {
            if !crate::evaluation::policy_rule_registry().contains(&c.rule) {
                return Err(format!("task {task}: unknown policy rule `{}`", c.rule));
            }
        }
        Ok(())
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.runs_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::EcMode;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.pipeline.max_reasks, 2);
        assert_eq!(c.pipeline.ec.threshold, 0.7);
        assert_eq!(c.codegen.max_attempts, 3);
        assert_eq!(c.bench.trials, 20);
    }

    #[test]
    fn partial_tables_merge_with_defaults() {
        let c = Config::from_toml(
            r#"
            [pipeline.ec]
            mode = "off"

            [codegen.limits]
            timeout_secs = 5.0

            [evaluation.criteria.cart-pole]
            rule = "threshold"
            value = 195.0
            "#,
        )
        .unwrap();
        assert_eq!(c.pipeline.ec.mode, EcMode::Off);
        assert_eq!(c.pipeline.ec.max_reexaminations, 2);
        assert_eq!(c.codegen.limits.timeout_secs, 5.0);
        assert_eq!(c.evaluation.criterion("cart-pole").unwrap().value, 195.0);
        assert_eq!(
            c.evaluation.criterion("mountain-car").unwrap().value,
            -130.0
        );
        assert!(c.evaluation.criterion("toy").is_none());
    }

    #[test]
    fn unknown_rule_is_rejected() {
        let mut c = Config::default();
        c.evaluation
            .criteria
            .insert("x".into(), PolicyCriterion::threshold(1.0));
        assert!(c.check().is_ok());
        c.evaluation.criteria.get_mut("x").unwrap().rule = "vibes".into();
        assert!(c.check().is_err());
    }
}

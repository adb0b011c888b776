//! Prompt rendering and model completions.
//!
//! A [`CompletionBackend`] answers single-turn prompts. Backends are picked
//! by selector string through [`backend_registry`]:
//!
//! | selector            | backend                                          |
//! |---------------------|--------------------------------------------------|
//! | `live`              | OpenAI-compatible HTTP endpoint from config      |
//! | `replay:<dir>`      | recorded transcript entries, byte-identical      |
//! | `scripted:<dir>`    | hand-written responses per stage and ordinal     |
//!
//! A [`Session`] wraps a backend for one run: it assigns per-call-key
//! ordinals, computes prompt digests and optionally records every exchange
//! to a fixture directory.

mod http;
mod replay;
mod scripted;
mod template;
mod transcript;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::registry::Registry;

pub use http::HttpBackend;
pub use replay::ReplayBackend;
pub use scripted::ScriptedBackend;
pub use template::{
    render_addendum, render_prompt, slot_value, Addendum, MissingSlotInput, PromptContext,
    PromptTemplate, STAGE_SLOTS,
};
pub use transcript::{entry_file_name, TranscriptEntry, TranscriptWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingSettings {
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

impl Default for DecodingSettings {
    fn default() -> Self {
        Self {
            temperature: Some(0.0),
            max_tokens: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

/// Backend settings, normally the `[backend]` table of the config file.
/// The credential itself is read from the environment variable named by
/// `credential_env`, never from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub model: String,
    pub credential_env: String,
    pub in_flight: usize,
    pub request_timeout_secs: u64,
    pub retry: RetryPolicy,
    pub decoding: DecodingSettings,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            credential_env: "OPENAI_API_KEY".into(),
            in_flight: 4,
            request_timeout_secs: 300,
            retry: RetryPolicy::default(),
            decoding: DecodingSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Call key: a stage id, or `<stage>_check` for self-check calls.
    pub stage: String,
    pub prompt: String,
    pub model: String,
    pub decoding: DecodingSettings,
    pub digest: String,
    pub ordinal: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub latency_ms: u64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited (retry after {retry_after_secs:?} s)")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("no recorded response for stage `{stage}` digest {digest} ordinal {ordinal}")]
    ReplayMiss {
        stage: String,
        digest: String,
        ordinal: u32,
    },
    #[error("backend returned an empty completion")]
    EmptyResponse,
    #[error("failed to persist transcript entry {key}: {message}")]
    Persist { key: String, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;
}

/// Content hash of a call: tolerant of run reordering, not of prompt drift.
pub fn prompt_digest(stage: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

pub type BackendRegistry = Registry<dyn CompletionBackend, GatewayConfig>;

pub fn backend_registry() -> BackendRegistry {
    let mut reg: BackendRegistry = Registry::new("backend");
    reg.register("live", |_, cfg| {
        HttpBackend::new(cfg.clone())
            .map(|b| Box::new(b) as Box<dyn CompletionBackend>)
            .map_err(|e| e.to_string())
    });
    reg.register("replay", |dir, _| {
        if dir.is_empty() {
            return Err("replay needs a fixture directory: replay:<dir>".into());
        }
        ReplayBackend::open(dir)
            .map(|b| Box::new(b) as Box<dyn CompletionBackend>)
            .map_err(|e| e.to_string())
    });
    reg.register("scripted", |dir, _| {
        if dir.is_empty() {
            return Err("scripted needs a script directory: scripted:<dir>[,<dir>...]".into());
        }
        let dirs: Vec<&str> = dir.split(',').collect();
        ScriptedBackend::from_dirs(&dirs)
            .map(|b| Box::new(b) as Box<dyn CompletionBackend>)
            .map_err(|e| e.to_string())
    });
    reg
}

/// Key of one exchange inside a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRef {
    pub stage: String,
    pub digest: String,
    pub ordinal: u32,
}

/// Per-run view of a backend.
pub struct Session {
    backend: Arc<dyn CompletionBackend>,
    model: String,
    decoding: DecodingSettings,
    counters: BTreeMap<String, u32>,
    recorder: Option<Arc<TranscriptWriter>>,
    log: Vec<TranscriptEntry>,
}

impl Session {
    pub fn new(backend: Arc<dyn CompletionBackend>, config: &GatewayConfig) -> Self {
        Self {
            backend,
            model: config.model.clone(),
            decoding: config.decoding.clone(),
            counters: BTreeMap::new(),
            recorder: None,
            log: Vec::new(),
        }
    }

    pub fn with_recorder(mut self, recorder: Arc<TranscriptWriter>) -> Self {
        self.recorder = Some(recorder);
        self
    }

    /// Restores ordinals of a resumed run so replayed keys stay aligned.
    pub fn with_counters(mut self, counters: BTreeMap<String, u32>) -> Self {
        self.counters = counters;
        self
    }

    pub fn counters(&self) -> &BTreeMap<String, u32> {
        &self.counters
    }

    /// Every exchange of this session, prompts included.
    pub fn log(&self) -> &[TranscriptEntry] {
        &self.log
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn complete(
        &mut self,
        stage: &str,
        prompt: String,
    ) -> Result<(CallRef, CompletionResponse), GatewayError> {
        let ordinal = self.counters.get(stage).copied().unwrap_or(0);
        let digest = prompt_digest(stage, &prompt);
        let request = CompletionRequest {
            stage: stage.to_string(),
            prompt,
            model: self.model.clone(),
            decoding: self.decoding.clone(),
            digest: digest.clone(),
            ordinal,
        };
        let started = Instant::now();
        let mut response = self.backend.complete(&request)?;
        if response.latency_ms == 0 {
            response.latency_ms = started.elapsed().as_millis() as u64;
        }
        if response.text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        self.counters.insert(stage.to_string(), ordinal + 1);
        let entry = TranscriptEntry {
            stage: request.stage,
            prompt_digest: digest.clone(),
            ordinal,
            prompt: Some(request.prompt),
            response: response.text.clone(),
        };
        if let Some(rec) = &self.recorder {
            rec.append(&entry)?;
        }
        self.log.push(entry);
        let call = CallRef {
            stage: stage.to_string(),
            digest,
            ordinal,
        };
        Ok((call, response))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_stage_and_prompt() {
        let a = prompt_digest("parameter", "hello");
        assert_eq!(a, prompt_digest("parameter", "hello"));
        assert_ne!(a, prompt_digest("objective", "hello"));
        assert_ne!(a, prompt_digest("parameter", "hello "));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn session_counts_ordinals_per_stage() {
        let backend = ScriptedBackend::new()
            .with("coding", "a")
            .with("coding", "b")
            .with("coding", "c")
            .with("parameter", "p");
        let mut s = Session::new(Arc::new(backend), &GatewayConfig::default());
        let (c0, r0) = s.complete("coding", "x".into()).unwrap();
        let (p0, _) = s.complete("parameter", "x".into()).unwrap();
        let (c1, r1) = s.complete("coding", "y".into()).unwrap();
        assert_eq!((c0.ordinal, p0.ordinal, c1.ordinal), (0, 0, 1));
        assert_eq!((r0.text.as_str(), r1.text.as_str()), ("a", "b"));
    }

    #[test]
    fn recording_then_replaying_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let writer = Arc::new(TranscriptWriter::create(dir.path()).unwrap());
        let scripted = ScriptedBackend::new()
            .with("coding", "print('one')\n")
            .with("coding", "print('two')  \n\n")
            .with("coding", "print('three')");
        let mut rec = Session::new(Arc::new(scripted), &GatewayConfig::default())
            .with_recorder(writer.clone());
        let prompts = ["p0", "p1", "p2"];
        let recorded: Vec<String> = prompts
            .iter()
            .map(|p| rec.complete("coding", p.to_string()).unwrap().1.text)
            .collect();
        assert_eq!(writer.entries_written(), 3);

        for _ in 0..2 {
            let replay = ReplayBackend::open(dir.path()).unwrap();
            let mut s = Session::new(Arc::new(replay), &GatewayConfig::default());
            let replayed: Vec<String> = prompts
                .iter()
                .map(|p| s.complete("coding", p.to_string()).unwrap().1.text)
                .collect();
            let hash = |v: &[String]| prompt_digest("", &v.join("\u{0}"));
            assert_eq!(hash(&replayed), hash(&recorded));
        }
    }

    #[test]
    fn replay_miss_names_stage_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let replay = ReplayBackend::open(dir.path()).unwrap();
        let mut s = Session::new(Arc::new(replay), &GatewayConfig::default());
        let err = s
            .complete("objective", "never recorded".into())
            .unwrap_err();
        match err {
            GatewayError::ReplayMiss {
                stage,
                digest,
                ordinal,
            } => {
                assert_eq!(stage, "objective");
                assert_eq!(digest, prompt_digest("objective", "never recorded"));
                assert_eq!(ordinal, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn registry_knows_all_backends() {
        let reg = backend_registry();
        let names: Vec<_> = reg.names().collect();
        assert_eq!(names, vec!["live", "replay", "scripted"]);
        assert!(reg.create("replay", &GatewayConfig::default()).is_err());
    }
}

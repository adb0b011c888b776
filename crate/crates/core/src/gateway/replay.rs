use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::transcript::load_entries;
use super::{CompletionBackend, CompletionRequest, CompletionResponse, GatewayError};

/// Serves recorded responses keyed by `(stage, prompt digest, ordinal)`.
/// Any prompt drift surfaces as [`GatewayError::ReplayMiss`].
#[derive(Debug)]
pub struct ReplayBackend {
    dir: PathBuf,
    entries: HashMap<(String, String, u32), String>,
}

impl ReplayBackend {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let dir = dir.as_ref().to_path_buf();
        let loaded = load_entries(&dir).map_err(|e| {
            GatewayError::Config(format!("cannot read fixtures in {}: {e}", dir.display()))
        })?;
        let entries = loaded
            .into_iter()
            .map(|e| ((e.stage, e.prompt_digest, e.ordinal), e.response))
            .collect();
        Ok(Self { dir, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn id(&self) -> String {
        format!("replay:{}", self.dir.display())
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let key = (req.stage.clone(), req.digest.clone(), req.ordinal);
        let text = self
            .entries
            .get(&key)
            .ok_or_else(|| GatewayError::ReplayMiss {
                stage: req.stage.clone(),
                digest: req.digest.clone(),
                ordinal: req.ordinal,
            })?;
        Ok(CompletionResponse {
            text: text.clone(),
            latency_ms: 0,
            prompt_tokens: None,
            completion_tokens: None,
            backend: "replay".into(),
        })
    }
}

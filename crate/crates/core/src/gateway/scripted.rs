use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{CompletionBackend, CompletionRequest, CompletionResponse, GatewayError};

/// Returns canned responses per call key, indexed by ordinal. The last
/// response of a key is repeated once the list runs out.
///
/// On disk a script is a directory of `<key>.txt` (ordinal 0) and
/// `<key>.<n>.txt` files, e.g. `coding.txt`, `coding.1.txt`,
/// `parameter_check.txt`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: BTreeMap<String, Vec<String>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, response: impl Into<String>) -> Self {
        self.push(key, response);
        self
    }

    pub fn push(&mut self, key: &str, response: impl Into<String>) {
        self.responses
            .entry(key.to_string())
            .or_default()
            .push(response.into());
    }

    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let dir = dir.as_ref();
        let err = |e: std::io::Error| {
            GatewayError::Config(format!("cannot read script {}: {e}", dir.display()))
        };
        let mut by_key: BTreeMap<String, BTreeMap<u32, String>> = BTreeMap::new();
        for item in fs::read_dir(dir).map_err(err)? {
            let path = item.map_err(err)?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(stem) = name.strip_suffix(".txt") else {
                continue;
            };
            let (key, ordinal) = match stem.rsplit_once('.') {
                Some((k, n)) => match n.parse::<u32>() {
                    Ok(n) => (k, n),
                    Err(_) => continue,
                },
                None => (stem, 0),
            };
            let text = fs::read_to_string(&path).map_err(err)?;
            by_key
                .entry(key.to_string())
                .or_default()
                .insert(ordinal, text);
        }
        let mut backend = Self::new();
        for (key, by_ord) in by_key {
            let expected: Vec<u32> = (0..by_ord.len() as u32).collect();
            let found: Vec<u32> = by_ord.keys().copied().collect();
            if found != expected {
                return Err(GatewayError::Config(format!(
                    "script key `{key}` has ordinals {found:?}; they must be contiguous from 0"
                )));
            }
            for text in by_ord.into_values() {
                backend.push(&key, text);
            }
        }
        Ok(backend)
    }

    /// Merges several script directories. A key found in a later directory
    /// replaces that key's responses from earlier ones.
    pub fn from_dirs<P: AsRef<Path>>(dirs: &[P]) -> Result<Self, GatewayError> {
        let mut merged = Self::new();
        for dir in dirs {
            merged.responses.extend(Self::from_dir(dir)?.responses);
        }
        Ok(merged)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let list = self.responses.get(&req.stage).filter(|l| !l.is_empty());
        let text = list
            .map(|l| l[(req.ordinal as usize).min(l.len() - 1)].clone())
            .ok_or_else(|| GatewayError::ReplayMiss {
                stage: req.stage.clone(),
                digest: req.digest.clone(),
                ordinal: req.ordinal,
            })?;
        Ok(CompletionResponse {
            text,
            latency_ms: 0,
            prompt_tokens: None,
            completion_tokens: None,
            backend: "scripted".into(),
        })
    }
}

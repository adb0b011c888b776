use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// One recorded exchange. Stored one per file so fixture diffs stay small.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub stage: String,
    pub prompt_digest: String,
    pub ordinal: u32,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

pub fn entry_file_name(stage: &str, digest: &str, ordinal: u32) -> String {
    format!("{stage}-{digest}-{ordinal}.json")
}

/// Appends entries to a fixture directory. Shared between runs recorded in
/// parallel; the lock keeps each file write whole.
pub struct TranscriptWriter {
    dir: PathBuf,
    lock: Mutex<()>,
    written: AtomicUsize,
}

impl TranscriptWriter {
    pub fn create(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
            lock: Mutex::new(()),
            written: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entries_written(&self) -> usize {
        self.written.load(Ordering::SeqCst)
    }

    pub fn append(&self, entry: &TranscriptEntry) -> Result<(), GatewayError> {
        let name = entry_file_name(&entry.stage, &entry.prompt_digest, entry.ordinal);
        let persist = |message: String| GatewayError::Persist {
            key: name.clone(),
            message,
        };
        let body = serde_json::to_string_pretty(entry).map_err(|e| persist(e.to_string()))?;
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, body + "\n").map_err(|e| persist(e.to_string()))?;
        fs::rename(&tmp, self.dir.join(&name)).map_err(|e| persist(e.to_string()))?;
        self.written.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

pub(crate) fn load_entries(dir: &Path) -> std::io::Result<Vec<TranscriptEntry>> {
    let mut out = Vec::new();
    for item in fs::read_dir(dir)? {
        let path = item?.path();
        let is_entry = path.extension().is_some_and(|e| e == "json")
            && !path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'));
        if !is_entry {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        // Other JSON files may share the directory; only entries count.
        if let Ok(entry) = serde_json::from_str::<TranscriptEntry>(&text) {
            out.push(entry);
        }
    }
    out.sort_by(|a, b| {
        (&a.stage, a.ordinal, &a.prompt_digest).cmp(&(&b.stage, b.ordinal, &b.prompt_digest))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_round_trip_through_the_directory() {
        let dir = tempfile::tempdir().unwrap();
        let w = TranscriptWriter::create(dir.path()).unwrap();
        let e = TranscriptEntry {
            stage: "sar".into(),
            prompt_digest: "ab".repeat(32),
            ordinal: 1,
            response: "{\"STATE\": 1}".into(),
            prompt: None,
        };
        w.append(&e).unwrap();
        fs::write(dir.path().join("notes.json"), "[1, 2]").unwrap();
        let back = load_entries(dir.path()).unwrap();
        assert_eq!(back, vec![e]);
        assert!(dir
            .path()
            .join(format!("sar-{}-1.json", "ab".repeat(32)))
            .exists());
    }
}

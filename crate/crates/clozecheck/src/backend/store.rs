//! Append-only JSONL transcript store mapping request digests to recorded
//! completions. One file serves as cache, recording target, and replay
//! source; the last entry for a digest wins.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::wire::{CompletionRequest, CompletionResponse};
use super::BackendError;

/// On-disk line format, versioned for forward compatibility.
#[derive(Serialize, Deserialize)]
struct Record {
    v: u32,
    digest: String,
    request: CompletionRequest,
    response: CompletionResponse,
}

const RECORD_VERSION: u32 = 1;

/// Thread-safe digest → response store, optionally persisted as JSONL.
#[derive(Debug)]
pub struct TranscriptStore {
    path: Option<PathBuf>,
    file: Option<Mutex<File>>,
    entries: Mutex<BTreeMap<String, CompletionResponse>>,
}

impl TranscriptStore {
    /// Volatile store: caches within one process, persists nothing.
    #[must_use]
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            entries: Mutex::new(BTreeMap::new()),
        }
    }

    /// Opens (creating if missing) a JSONL transcript file and loads every
    /// valid record. Fails on the first malformed or inconsistent line,
    /// naming its 1-based line number.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| {
                    BackendError::Store(format!("create {}: {e}", parent.display()))
                })?;
            }
        }
        let mut entries = BTreeMap::new();
        if path.exists() {
            let file = File::open(path)
                .map_err(|e| BackendError::Store(format!("open {}: {e}", path.display())))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let lineno = lineno + 1;
                let line = line.map_err(|e| {
                    BackendError::Store(format!("read {} line {lineno}: {e}", path.display()))
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record = serde_json::from_str(&line).map_err(|e| {
                    BackendError::Store(format!(
                        "parse {} line {lineno}: {e}",
                        path.display()
                    ))
                })?;
                if record.v != RECORD_VERSION {
                    return Err(BackendError::Store(format!(
                        "parse {} line {lineno}: unsupported record version {}",
                        path.display(),
                        record.v
                    )));
                }
                let expected = record.request.digest();
                if record.digest != expected {
                    return Err(BackendError::Store(format!(
                        "parse {} line {lineno}: digest {} does not match request (expected {})",
                        path.display(),
                        record.digest,
                        expected
                    )));
                }
                entries.insert(record.digest, record.response);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BackendError::Store(format!("append {}: {e}", path.display())))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Some(Mutex::new(file)),
            entries: Mutex::new(entries),
        })
    }

    /// Looks up a recorded response by request digest.
    #[must_use]
    pub fn get(&self, digest: &str) -> Option<CompletionResponse> {
        self.entries.lock().expect("store lock").get(digest).cloned()
    }

    /// Records a response, appending to the backing file when present.
    pub fn put(
        &self,
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> Result<(), BackendError> {
        let digest = request.digest();
        if let Some(file) = &self.file {
            let record = Record {
                v: RECORD_VERSION,
                digest: digest.clone(),
                request: request.clone(),
                response: response.clone(),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| BackendError::Store(format!("serialize record: {e}")))?;
            let mut file = file.lock().expect("store file lock");
            writeln!(file, "{line}").and_then(|()| file.flush()).map_err(|e| {
                BackendError::Store(format!(
                    "write {}: {e}",
                    self.path.as_deref().unwrap_or(Path::new("?")).display()
                ))
            })?;
        }
        self.entries
            .lock()
            .expect("store lock")
            .insert(digest, response.clone());
        Ok(())
    }

    /// Drops every entry; a file-backed store is truncated on disk.
    pub fn purge(&self) -> Result<(), BackendError> {
        let mut entries = self.entries.lock().expect("store lock");
        if let Some(file) = &self.file {
            let file = file.lock().expect("store file lock");
            file.set_len(0).map_err(|e| {
                BackendError::Store(format!(
                    "truncate {}: {e}",
                    self.path.as_deref().unwrap_or(Path::new("?")).display()
                ))
            })?;
        }
        entries.clear();
        Ok(())
    }

    /// Number of distinct digests held.
    #[must_use]
    pub fn len(&self) -> usize {
        self.entries.lock().expect("store lock").len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Backing file, if persistent.
    #[must_use]
    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

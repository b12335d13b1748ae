//! Persistent response cache: one JSON file per request digest.
//!
//! Writes go to a temp file first and are renamed into place, so readers
//! never observe a partially written entry and a crash mid-write leaves no
//! corrupt visible state.

use super::{CacheKey, ChatRequest, ChatResponse};
use crate::error::{HiveError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

static WRITE_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    digest: String,
    provider: String,
    model: String,
    temperature: f64,
    system_text: String,
    user_text: String,
    response_text: String,
}

/// Directory-backed cache. Safe for concurrent readers and writers.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| HiveError::io(format!("creating cache dir {}", dir.display()), e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.digest))
    }

    /// Stored response text for `key`, or `None` on miss. A corrupt entry
    /// logs a warning and counts as a miss.
    pub fn lookup(&self, key: &CacheKey) -> Option<String> {
        let path = self.entry_path(key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.digest == key.digest => Some(entry.response_text),
            Ok(entry) => {
                log::warn!(
                    "cache entry {} holds digest {}; treating as miss",
                    path.display(),
                    entry.digest
                );
                None
            }
            Err(e) => {
                log::warn!(
                    "corrupt cache entry {}: {e}; treating as miss",
                    path.display()
                );
                None
            }
        }
    }

    pub fn store(
        &self,
        key: &CacheKey,
        request: &ChatRequest,
        response: &ChatResponse,
    ) -> Result<()> {
        let entry = CacheEntry {
            digest: key.digest.clone(),
            provider: response.provider.clone(),
            model: request.model.clone(),
            temperature: request.temperature,
            system_text: request.system_text.clone(),
            user_text: request.user_text.clone(),
            response_text: response.text.clone(),
        };
        let body = serde_json::to_vec_pretty(&entry).map_err(|e| HiveError::Json {
            context: "serializing cache entry".to_string(),
            source: e,
        })?;
        let tmp = self.dir.join(format!(
            ".{}.tmp.{}.{}",
            key.digest,
            std::process::id(),
            WRITE_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, &body)
            .map_err(|e| HiveError::io(format!("writing cache entry {}", tmp.display()), e))?;
        std::fs::rename(&tmp, self.entry_path(key))
            .map_err(|e| HiveError::io("publishing cache entry".to_string(), e))
    }
}

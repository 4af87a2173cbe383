use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatRequest, Completion};
use crate::digest::json_digest;

/// Content digest identifying one sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(pub String);

#[derive(Serialize)]
struct KeyFields<'a> {
    model_id: &'a str,
    temperature: f64,
    max_output_tokens: u32,
    messages: &'a [ChatMessage],
    attempt_seed: u64,
    repeat_index: u32,
    namespace: &'a str,
}

impl CacheKey {
    pub fn of(request: &ChatRequest) -> Self {
        CacheKey(json_digest(&KeyFields {
            model_id: &request.model.model_id,
            temperature: request.model.temperature,
            max_output_tokens: request.model.max_output_tokens,
            messages: &request.messages,
            attempt_seed: request.attempt_seed,
            repeat_index: request.repeat_index,
            namespace: &request.namespace,
        }))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    completion: Completion,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
}

/// Completions stored as `<dir>/<first2>/<digest>.json`.
///
/// Entries are written once through a temp file and rename, so readers
/// never observe partial files. Unreadable entries count as misses.
#[derive(Debug, Clone)]
pub struct CacheStore {
    dir: PathBuf,
}

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    pub fn get(&self, key: &CacheKey) -> Option<Completion> {
        let path = self.path_for(key);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(entry) if entry.key == key.0 => Some(entry.completion),
            Ok(_) => {
                tracing::warn!(path = %path.display(), "cache entry key mismatch, ignoring");
                None
            }
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "corrupt cache entry, ignoring");
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, completion: &Completion) -> std::io::Result<()> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache paths have a parent");
        fs::create_dir_all(parent)?;
        let entry = Entry {
            key: key.0.clone(),
            completion: completion.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        tmp.write_all(&serde_json::to_vec(&entry).expect("cache entries serialize"))?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn stats(&self) -> std::io::Result<CacheStats> {
        let mut stats = CacheStats::default();
        if !self.dir.exists() {
            return Ok(stats);
        }
        for shard in fs::read_dir(&self.dir)? {
            let shard = shard?;
            if !shard.file_type()?.is_dir() {
                continue;
            }
            for file in fs::read_dir(shard.path())? {
                let file = file?;
                if file.path().extension().is_some_and(|e| e == "json") {
                    stats.entries += 1;
                    stats.bytes += file.metadata()?.len();
                }
            }
        }
        Ok(stats)
    }

    pub fn clear(&self) -> std::io::Result<()> {
        if self.dir.exists() {
            fs::remove_dir_all(&self.dir)?;
        }
        Ok(())
    }
}

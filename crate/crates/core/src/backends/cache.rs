use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::domain::Modality;

use super::{Backend, BackendError, BackendRequest, BackendResponse, ResponseSource};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model_id: String,
    pub prompt_sha256: String,
    pub response: BackendResponse,
    /// Unix seconds.
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub shards: usize,
    pub bytes: u64,
}

/// Content-addressed response store: JSONL shards named by the first two hex
/// characters of the key. Each entry is one `write_all` of a full line to a
/// file opened in append mode, so concurrent writers never interleave entries.
pub struct ResponseCache {
    dir: PathBuf,
    index: Mutex<HashMap<String, CacheEntry>>,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<ResponseCache> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut index = HashMap::new();
        for path in shard_files(&dir)? {
            let file = std::fs::File::open(&path)?;
            for line in BufReader::new(file).lines() {
                let line = line?;
                // a torn trailing line from a crashed writer is ignored
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&line) {
                    index.insert(entry.key.clone(), entry);
                }
            }
        }
        Ok(ResponseCache {
            dir,
            index: Mutex::new(index),
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.index.lock().expect("cache index poisoned").get(key).cloned()
    }

    pub fn put(&self, request: &BackendRequest, response: &BackendResponse) -> std::io::Result<()> {
        let key = request.cache_key();
        let entry = CacheEntry {
            key: key.clone(),
            model_id: request.model_id.clone(),
            prompt_sha256: request.prompt_sha256(),
            response: response.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
        line.push('\n');
        {
            let _guard = self.write_lock.lock().expect("cache write lock poisoned");
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.dir.join(format!("{}.jsonl", &key[..2])))?;
            file.write_all(line.as_bytes())?;
        }
        self.index.lock().expect("cache index poisoned").insert(key, entry);
        Ok(())
    }

    pub fn stats(&self) -> std::io::Result<CacheStats> {
        let files = shard_files(&self.dir)?;
        let mut bytes = 0;
        for f in &files {
            bytes += std::fs::metadata(f)?.len();
        }
        Ok(CacheStats {
            entries: self.index.lock().expect("cache index poisoned").len(),
            shards: files.len(),
            bytes,
        })
    }

    /// Deletes every shard. Returns the number of entries dropped.
    pub fn clear(&self) -> std::io::Result<usize> {
        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        for f in shard_files(&self.dir)? {
            std::fs::remove_file(f)?;
        }
        let mut index = self.index.lock().expect("cache index poisoned");
        let n = index.len();
        index.clear();
        Ok(n)
    }
}

fn shard_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Serves exact-key hits from the cache; stores successful misses.
pub struct CachedBackend<B> {
    inner: B,
    cache: Arc<ResponseCache>,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, cache: Arc<ResponseCache>) -> Self {
        CachedBackend { inner, cache }
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn modality(&self) -> Modality {
        self.inner.modality()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.check_modality(request)?;
        if let Some(hit) = self.cache.get(&request.cache_key()) {
            return Ok(BackendResponse {
                source: ResponseSource::Cache,
                ..hit.response
            });
        }
        let response = self.inner.complete(request)?;
        self.cache
            .put(request, &response)
            .map_err(|e| BackendError::Permanent(format!("cache write failed: {e}")))?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;
    use crate::domain::Sampling;
    use crate::prompting::RenderedPrompt;

    fn req(text: &str) -> BackendRequest {
        BackendRequest::new("m", RenderedPrompt::text_only(text), Sampling::default())
    }

    #[test]
    fn second_call_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let mock = MockBackend::new("m").with_default("cached text");
        let backend = CachedBackend::new(mock.clone(), cache.clone());
        let a = backend.complete(&req("q")).unwrap();
        let b = backend.complete(&req("q")).unwrap();
        assert_eq!(a.source, ResponseSource::Mock);
        assert_eq!(b.source, ResponseSource::Cache);
        assert_eq!(a.text, b.text);
        assert_eq!(mock.call_count(), 1);
        assert_eq!(cache.stats().unwrap().entries, 1);
    }

    #[test]
    fn cache_persists_across_reopen_and_clears() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
            let backend = CachedBackend::new(MockBackend::new("m").with_default("x"), cache);
            for i in 0..5 {
                backend.complete(&req(&format!("q{i}"))).unwrap();
            }
        }
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache.stats().unwrap().entries, 5);
        assert!(cache.get(&req("q3").cache_key()).is_some());
        assert_eq!(cache.clear().unwrap(), 5);
        assert_eq!(ResponseCache::open(dir.path()).unwrap().stats().unwrap().entries, 0);
    }

    #[test]
    fn concurrent_writers_keep_every_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let backend = Arc::new(CachedBackend::new(MockBackend::new("m").with_default("x"), cache));
        std::thread::scope(|s| {
            for t in 0..8 {
                let backend = backend.clone();
                s.spawn(move || {
                    for i in 0..25 {
                        backend.complete(&req(&format!("t{t}-{i}"))).unwrap();
                    }
                });
            }
        });
        assert_eq!(ResponseCache::open(dir.path()).unwrap().stats().unwrap().entries, 200);
    }
}

//! Persistent content-addressed response cache.
//!
//! Storage is an append-only JSONL file: one entry per completed request,
//! keyed by [`cache_key`](crate::backend::cache_key). On open the whole file
//! is folded into memory with later duplicates winning, so re-queried
//! prompts simply append a fresh line. A truncated or garbled line (e.g.
//! from a crash mid-append) is skipped and counted, never fatal.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::backend::{
    cache_key, prompt_hash, Backend, BackendError, Completion, GenerationParams,
};
use crate::promptkit::RenderedPrompt;

/// One cached request/response pair, exactly as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub prompt_text: String,
    pub params: GenerationParams,
    pub raw_text: String,
    pub trimmed_text: String,
    pub backend_id: String,
    pub timestamp: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

struct Inner {
    map: HashMap<String, CacheEntry>,
    file: std::fs::File,
    skipped: usize,
}

/// Thread-safe cache handle; lookups take a read lock, stores a write lock
/// plus one appended line.
pub struct CompletionCache {
    path: PathBuf,
    inner: RwLock<Inner>,
}

/// Parse cache JSONL from any reader, returning the surviving entries and
/// the number of skipped (malformed) lines. Never fails on content.
pub fn read_entries<R: BufRead>(reader: R) -> (Vec<CacheEntry>, usize) {
    let mut entries = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let Ok(line) = line else {
            skipped += 1;
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(&line) {
            Ok(entry) => entries.push(entry),
            Err(_) => skipped += 1,
        }
    }
    (entries, skipped)
}

impl CompletionCache {
    /// Open (creating if missing) the cache at `path` and load all existing
    /// entries; later lines shadow earlier ones with the same key.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let io_err = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
        }
        let mut map = HashMap::new();
        let mut skipped = 0usize;
        if path.exists() {
            let file = std::fs::File::open(path).map_err(io_err)?;
            let (entries, bad) = read_entries(BufReader::new(file));
            skipped = bad;
            for entry in entries {
                map.insert(entry.key.clone(), entry);
            }
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(CompletionCache {
            path: path.to_path_buf(),
            inner: RwLock::new(Inner { map, file, skipped }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn lookup(&self, key: &str) -> Option<CacheEntry> {
        self.inner.read().unwrap().map.get(key).cloned()
    }

    /// Append an entry to disk and the in-memory index.
    pub fn store(&self, entry: CacheEntry) -> Result<(), CacheError> {
        let line = serde_json::to_string(&entry).expect("cache entry serialize");
        let mut inner = self.inner.write().unwrap();
        writeln!(inner.file, "{line}").map_err(|source| CacheError::Io {
            path: self.path.display().to_string(),
            source,
        })?;
        inner.map.insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Malformed lines skipped while loading the file.
    pub fn skipped(&self) -> usize {
        self.inner.read().unwrap().skipped
    }
}

/// A backend wrapper that serves repeats from the cache: a hit returns the
/// stored continuation without touching the inner backend, a miss forwards
/// the call and persists the result.
pub struct CachedBackend<B> {
    inner: B,
    cache: CompletionCache,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, cache: CompletionCache) -> Self {
        CachedBackend { inner, cache }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cache(&self) -> &CompletionCache {
        &self.cache
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        let key = cache_key(prompt, params, self.inner.id());
        if let Some(entry) = self.cache.lookup(&key) {
            return Ok(Completion {
                raw_text: entry.raw_text,
                text: entry.trimmed_text,
                prompt_hash: prompt_hash(&prompt.text),
                backend_id: entry.backend_id,
                latency_ms: 0,
                from_cache: true,
            });
        }
        let completion = self.inner.complete(prompt, params)?;
        self.cache.store(CacheEntry {
            key,
            prompt_text: prompt.text.clone(),
            params: params.clone(),
            raw_text: completion.raw_text.clone(),
            trimmed_text: completion.text.clone(),
            backend_id: completion.backend_id.clone(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        })?;
        Ok(completion)
    }
}

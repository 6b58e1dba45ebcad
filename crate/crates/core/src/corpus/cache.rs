use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Document, DocumentSource};
use crate::llm::audit::sha256_hex;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub memory_hits: u64,
    pub disk_hits: u64,
    pub fetches: u64,
}

#[derive(Serialize, Deserialize)]
struct QueryEntry {
    query: String,
    k: usize,
    documents: Vec<String>,
}

type Slot = Arc<Mutex<Option<Vec<Document>>>>;

/// Read-through cache around a [`DocumentSource`].
///
/// Layout under the cache directory:
///
/// ```text
/// docs/<sha256 of document JSON>.json
/// queries/<sha256 of "query\0k">.json   {"query", "k", "documents": [<doc hash>, ...]}
/// ```
///
/// Document files are verified against their names on read; a mismatch or
/// missing file is treated as a miss. Concurrent lookups of one key share a
/// single fetch.
pub struct CachedSource<S> {
    inner: S,
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
    memory_hits: AtomicU64,
    disk_hits: AtomicU64,
    fetches: AtomicU64,
}

impl<S: DocumentSource> CachedSource<S> {
    /// In-process cache only.
    pub fn in_memory(inner: S) -> Self {
        Self {
            inner,
            dir: None,
            slots: Mutex::new(HashMap::new()),
            memory_hits: AtomicU64::new(0),
            disk_hits: AtomicU64::new(0),
            fetches: AtomicU64::new(0),
        }
    }

    pub fn on_disk(inner: S, dir: &Path) -> Result<Self, CorpusError> {
        fs::create_dir_all(dir.join("docs"))?;
        fs::create_dir_all(dir.join("queries"))?;
        let mut me = Self::in_memory(inner);
        me.dir = Some(dir.to_path_buf());
        Ok(me)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            memory_hits: self.memory_hits.load(Ordering::Relaxed),
            disk_hits: self.disk_hits.load(Ordering::Relaxed),
            fetches: self.fetches.load(Ordering::Relaxed),
        }
    }

    fn read_disk(&self, dir: &Path, key: &str) -> Option<Vec<Document>> {
        let raw = fs::read_to_string(dir.join("queries").join(format!("{key}.json"))).ok()?;
        let entry: QueryEntry = serde_json::from_str(&raw).ok()?;
        let mut docs = Vec::with_capacity(entry.documents.len());
        for hash in &entry.documents {
            let bytes = fs::read_to_string(dir.join("docs").join(format!("{hash}.json"))).ok()?;
            if sha256_hex(&bytes) != *hash {
                tracing::warn!(hash, "cached document failed its hash check");
                return None;
            }
            docs.push(serde_json::from_str(&bytes).ok()?);
        }
        Some(docs)
    }

    fn write_disk(&self, dir: &Path, key: &str, query: &str, k: usize, docs: &[Document]) -> Result<(), CorpusError> {
        let mut hashes = Vec::with_capacity(docs.len());
        for doc in docs {
            let bytes = serde_json::to_string(doc).expect("document serializes");
            let hash = sha256_hex(&bytes);
            let path = dir.join("docs").join(format!("{hash}.json"));
            if !path.exists() {
                fs::write(path, &bytes)?;
            }
            hashes.push(hash);
        }
        let entry = QueryEntry {
            query: query.to_string(),
            k,
            documents: hashes,
        };
        let tmp = dir.join("queries").join(format!("{key}.json.tmp"));
        fs::write(&tmp, serde_json::to_string(&entry).expect("entry serializes"))?;
        fs::rename(tmp, dir.join("queries").join(format!("{key}.json")))?;
        Ok(())
    }
}

impl<S: DocumentSource> DocumentSource for CachedSource<S> {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError> {
        let key = sha256_hex(&format!("{query}\0{k}"));
        let slot = self.slots.lock().unwrap().entry(key.clone()).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some(docs) = guard.as_ref() {
            self.memory_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(docs.clone());
        }
        if let Some(dir) = &self.dir {
            if let Some(docs) = self.read_disk(dir, &key) {
                self.disk_hits.fetch_add(1, Ordering::Relaxed);
                *guard = Some(docs.clone());
                return Ok(docs);
            }
        }
        self.fetches.fetch_add(1, Ordering::Relaxed);
        let docs = self.inner.search(query, k)?;
        if let Some(dir) = &self.dir {
            self.write_disk(dir, &key, query, k, &docs)?;
        }
        *guard = Some(docs.clone());
        Ok(docs)
    }
}

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::hashing::sha256_parts;

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    values: Vec<f64>,
}

/// Memoizing wrapper. Entries are keyed by a hash of (provider name, model,
/// normalized text) and optionally persisted as JSON lines.
pub struct CachedEmbedder<P> {
    inner: P,
    memory: RwLock<HashMap<String, EmbeddingVector>>,
    file: Option<(PathBuf, Mutex<File>)>,
    misses: std::sync::atomic::AtomicUsize,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn in_memory(inner: P) -> Self {
        CachedEmbedder {
            inner,
            memory: RwLock::new(HashMap::new()),
            file: None,
            misses: Default::default(),
        }
    }

    /// Load existing entries from `path` and append new ones to it.
    pub fn with_file(inner: P, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut memory = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    memory.insert(entry.key, EmbeddingVector::new(entry.values));
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(CachedEmbedder {
            inner,
            memory: RwLock::new(memory),
            file: Some((path, Mutex::new(file))),
            misses: Default::default(),
        })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    /// Number of texts that had to be sent to the inner provider.
    pub fn misses(&self) -> usize {
        self.misses.load(std::sync::atomic::Ordering::SeqCst)
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    fn key(&self, text: &str) -> String {
        sha256_parts(&[self.inner.name(), self.inner.model(), text])
    }

    fn store(&self, key: String, v: &EmbeddingVector) {
        if let Some((_, file)) = &self.file {
            let line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                values: v.values.clone(),
            })
            .expect("serializable");
            let mut f = file.lock().unwrap();
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("embedding cache write failed: {e}");
            }
        }
        self.memory.write().unwrap().insert(key, v.clone());
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_normalized(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let key = self.key(text);
        if let Some(v) = self.memory.read().unwrap().get(&key) {
            return Ok(v.clone());
        }
        self.misses.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let v = self.inner.embed_normalized(text)?;
        self.store(key, &v);
        Ok(v)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| self.key(t)).collect();
        let missing: Vec<String> = {
            let memory = self.memory.read().unwrap();
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !memory.contains_key(*k))
                .filter(|(t, _)| seen.insert((*t).clone()))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            self.misses
                .fetch_add(missing.len(), std::sync::atomic::Ordering::SeqCst);
            let fresh = self.inner.embed_batch(&missing)?;
            for (t, v) in missing.iter().zip(&fresh) {
                self.store(self.key(t), v);
            }
        }
        let memory = self.memory.read().unwrap();
        Ok(keys.iter().map(|k| memory[k].clone()).collect())
    }
}

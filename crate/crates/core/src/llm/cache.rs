use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::hashing::sha256_parts;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    prompt_hash: String,
    model: String,
    response: String,
}

/// Response cache keyed by (provider, model, prompt). Persisted as
/// append-only JSON lines when opened on a file.
pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    file: Option<Mutex<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            entries: RwLock::new(HashMap::new()),
            file: None,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path).map_err(io)?).lines() {
                let line = line.map_err(io)?;
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    entries.insert(entry.prompt_hash, entry.response);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn key(provider: &str, model: &str, prompt: &str) -> String {
        sha256_parts(&[provider, model, prompt])
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn put(&self, key: &str, model: &str, response: &str) {
        let fresh = self
            .entries
            .write()
            .unwrap()
            .insert(key.to_string(), response.to_string())
            .is_none();
        if let (true, Some(file)) = (fresh, &self.file) {
            let line = serde_json::to_string(&CacheLine {
                prompt_hash: key.to_string(),
                model: model.to_string(),
                response: response.to_string(),
            })
            .expect("serializable");
            if let Err(e) = writeln!(file.lock().unwrap(), "{line}") {
                log::warn!("response cache write failed: {e}");
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let key = ResponseCache::key("openai", "gpt", "prompt");
        {
            let cache = ResponseCache::open(&path).unwrap();
            assert!(cache.get(&key).is_none());
            cache.put(&key, "gpt", "ANSWER: Relevant");
            cache.put(&key, "gpt", "ANSWER: Relevant");
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.get(&key).as_deref(), Some("ANSWER: Relevant"));
        assert_ne!(key, ResponseCache::key("openai", "gpt", "prompt2"));
    }
}

//! Reproducibility record written next to every predictions file.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use ger_core::hashing::sha256_hex;
use ger_core::pipeline::{BaseSource, Ger, GerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub name: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// `SOURCE_DATE_EPOCH` when set, otherwise the wall clock.
    pub created_at: String,
    pub corpus: FileDigest,
    pub predictions_sha256: String,
    pub prompt_catalog_sha256: String,
    pub providers: BTreeMap<String, ProviderInfo>,
    pub embedder: ProviderInfo,
    pub instances: usize,
    pub failures: usize,
    pub trace_full: bool,
    pub config: GerConfig,
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Reproducible timestamp: honours `SOURCE_DATE_EPOCH` (seconds since the
/// Unix epoch).
pub fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0));
    fixed.unwrap_or_else(Utc::now).to_rfc3339()
}

pub fn providers_of(ger: &Ger) -> BTreeMap<String, ProviderInfo> {
    let info = |c: &ger_core::llm::LlmClient| ProviderInfo {
        name: c.provider().name().to_string(),
        model: c.provider().model().to_string(),
    };
    let mut out = BTreeMap::new();
    match &ger.base {
        BaseSource::Chat(c) => {
            out.insert("base".to_string(), info(c));
        }
        BaseSource::Precomputed(_) => {
            out.insert(
                "base".to_string(),
                ProviderInfo {
                    name: "precomputed".into(),
                    model: "file".into(),
                },
            );
        }
    }
    if ger.support.ground_truth.is_some() {
        out.insert(
            "support".to_string(),
            ProviderInfo {
                name: "ground_truth".into(),
                model: "file".into(),
            },
        );
    } else if let Some(c) = &ger.support.llm {
        out.insert("support".to_string(), info(c));
    }
    out.insert("correction".to_string(), info(&ger.correction));
    out.insert("discriminator".to_string(), info(&ger.discriminator));
    out
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("serializable");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    /// Recompute the recorded hashes. Returns one message per mismatch.
    pub fn verify(&self, predictions: &Path, corpus: &Path, catalog_sha256: &str) -> Result<Vec<String>, CliError> {
        let mut problems = Vec::new();
        let pred = file_sha256(predictions)?;
        if pred != self.predictions_sha256 {
            problems.push(format!("predictions hash {pred} differs from manifest {}", self.predictions_sha256));
        }
        let gold = file_sha256(corpus)?;
        if gold != self.corpus.sha256 {
            problems.push(format!("corpus hash {gold} differs from manifest {}", self.corpus.sha256));
        }
        if catalog_sha256 != self.prompt_catalog_sha256 {
            problems.push(format!(
                "prompt catalog hash {catalog_sha256} differs from manifest {}",
                self.prompt_catalog_sha256
            ));
        }
        Ok(problems)
    }
}

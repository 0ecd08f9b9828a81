//! Run configuration, read from TOML.
//!
//! ```toml
//! [run]
//! workers = 4
//!
//! [base]
//! source = "chat"            # or "precomputed"
//! provider = "gpt35"         # chat source
//! # path = "seen_large.jsonl" # precomputed source
//!
//! [support]
//! kg = true
//! llm = true
//! provider = "gpt35"
//! # ground_truth = "gold_support.jsonl"
//!
//! [correction]
//! provider = "gpt4o"
//!
//! [discriminator]
//! provider = "gpt35"
//! fallback = "consistent"
//!
//! [retrieval]
//! node_threshold = 0.5
//! triple_threshold = 0.5
//! aggregation = "mean"       # mean | min | geo
//!
//! [embedding]
//! kind = "openai"            # or "deterministic"
//! endpoint = "http://localhost:8080/v1/embeddings"
//! model = "all-MiniLM-L6-v2"
//! dimension = 384
//!
//! [providers.gpt35]
//! kind = "openai"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-3.5-turbo-0125"
//!
//! [providers.scripted]
//! kind = "mock"
//! script = "mock_script.json"
//! ```
//!
//! Relative paths are resolved against the config file's directory. API
//! keys come only from the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::embed::RemoteEmbedderConfig;
use crate::llm::OpenAiChatConfig;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GerConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub prompts: PromptSection,
    #[serde(default)]
    pub cache: CacheSection,
    pub base: BaseSection,
    #[serde(default)]
    pub support: SupportSection,
    pub correction: ProviderRef,
    pub discriminator: DiscriminatorSection,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { workers: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub chat: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSourceKind {
    Chat,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    pub source: BaseSourceKind,
    #[serde(default)]
    pub provider: Option<String>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportSection {
    pub kg: bool,
    pub llm: bool,
    pub provider: Option<String>,
    /// Gold support events; replaces both classifiers when set.
    pub ground_truth: Option<PathBuf>,
}

impl Default for SupportSection {
    fn default() -> Self {
        SupportSection {
            kg: true,
            llm: true,
            provider: None,
            ground_truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderRef {
    pub provider: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorFallback {
    #[default]
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub provider: String,
    #[serde(default)]
    pub fallback: DiscriminatorFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSection {
    Deterministic { dimension: usize },
    Openai(RemoteEmbedderConfig),
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection::Deterministic { dimension: 384 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSection {
    Openai(OpenAiChatConfig),
    Mock { script: PathBuf },
}

impl GerConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: GerConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a file and resolve relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.prompts.catalog.as_mut(),
            self.cache.chat.as_mut(),
            self.cache.embeddings.as_mut(),
            self.base.path.as_mut(),
            self.support.ground_truth.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for provider in self.providers.values_mut() {
            if let ProviderSection::Mock { script } = provider {
                fix(script);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        let known = |name: &str| self.providers.contains_key(name);
        match self.base.source {
            BaseSourceKind::Chat => match &self.base.provider {
                Some(p) if known(p) => {}
                Some(p) => return err(format!("base.provider `{p}` is not defined under [providers]")),
                None => return err("base.source = \"chat\" needs base.provider".into()),
            },
            BaseSourceKind::Precomputed => {
                if self.base.path.is_none() {
                    return err("base.source = \"precomputed\" needs base.path".into());
                }
            }
        }
        if self.support.ground_truth.is_none() {
            if !self.support.kg && !self.support.llm {
                return err("at least one support source (kg, llm, ground_truth) must be enabled".into());
            }
            if self.support.llm {
                match &self.support.provider {
                    Some(p) if known(p) => {}
                    Some(p) => return err(format!("support.provider `{p}` is not defined under [providers]")),
                    None => return err("support.llm = true needs support.provider".into()),
                }
            }
        }
        for (section, name) in [
            ("correction", &self.correction.provider),
            ("discriminator", &self.discriminator.provider),
        ] {
            if !known(name) {
                return err(format!("{section}.provider `{name}` is not defined under [providers]"));
            }
        }
        if self.run.workers == 0 {
            return err("run.workers must be at least 1".into());
        }
        if let EmbeddingSection::Deterministic { dimension } = self.embedding {
            if dimension < 2 {
                return err("embedding.dimension must be at least 2".into());
            }
        }
        self.retrieval
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Provider names in use, by module.
    pub fn provider_names(&self) -> BTreeMap<&'static str, String> {
        let mut out = BTreeMap::new();
        match self.base.source {
            BaseSourceKind::Chat => {
                out.insert("base", self.base.provider.clone().unwrap_or_default());
            }
            BaseSourceKind::Precomputed => {
                let path = self.base.path.as_ref().map(|p| p.display().to_string());
                out.insert("base", format!("precomputed:{}", path.unwrap_or_default()));
            }
        }
        if self.support.ground_truth.is_some() {
            out.insert("support", "ground_truth".to_string());
        } else if self.support.llm {
            out.insert("support", self.support.provider.clone().unwrap_or_default());
        }
        out.insert("correction", self.correction.provider.clone());
        out.insert("discriminator", self.discriminator.provider.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[base]
source = "chat"
provider = "m"

[support]
provider = "m"

[correction]
provider = "m"

[discriminator]
provider = "m"

[providers.m]
kind = "mock"
script = "script.json"
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = GerConfig::from_toml(MINIMAL).unwrap();
        assert!(cfg.support.kg && cfg.support.llm);
        assert_eq!(cfg.retrieval, RetrievalConfig::default());
        assert_eq!(cfg.embedding, EmbeddingSection::Deterministic { dimension: 384 });
        assert_eq!(cfg.discriminator.fallback, DiscriminatorFallback::Consistent);
        let round = GerConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn resolves_relative_paths() {
        let mut cfg = GerConfig::from_toml(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/configs"));
        match &cfg.providers["m"] {
            ProviderSection::Mock { script } => assert_eq!(script, Path::new("/configs/script.json")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let no_support = MINIMAL.replace("[support]\nprovider = \"m\"", "[support]\nkg = false\nllm = false");
        assert!(matches!(GerConfig::from_toml(&no_support), Err(PipelineError::Config(_))));
        let unknown = MINIMAL.replace("[correction]\nprovider = \"m\"", "[correction]\nprovider = \"x\"");
        assert!(GerConfig::from_toml(&unknown).is_err());
        let bad_tau = format!("{MINIMAL}\n[retrieval]\nnode_threshold = 2.0\n");
        assert!(GerConfig::from_toml(&bad_tau).is_err());
        let precomputed = MINIMAL.replace("source = \"chat\"", "source = \"precomputed\"");
        assert!(GerConfig::from_toml(&precomputed).is_err());
        let typo = format!("{MINIMAL}\n[run]\nworkrs = 2\n");
        assert!(GerConfig::from_toml(&typo).is_err());
    }

    #[test]
    fn ground_truth_replaces_support_sources() {
        let gt = MINIMAL.replace(
            "[support]\nprovider = \"m\"",
            "[support]\nkg = false\nllm = false\nground_truth = \"gold.jsonl\"",
        );
        let cfg = GerConfig::from_toml(&gt).unwrap();
        assert_eq!(cfg.provider_names()["support"], "ground_truth");
    }
}

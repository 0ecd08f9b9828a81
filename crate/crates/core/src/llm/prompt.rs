use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::hashing::sha256_hex;

/// Prompt catalog shipped with the crate.
pub const DEFAULT_CATALOG: &str = include_str!("../../prompts/catalog.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    BasePredict,
    SupportClassify,
    Rethink,
    Explore,
    ConsistencyDiscriminate,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::BasePredict,
        TemplateId::SupportClassify,
        TemplateId::Rethink,
        TemplateId::Explore,
        TemplateId::ConsistencyDiscriminate,
    ];

    pub fn parse(text: &str) -> Option<TemplateId> {
        TemplateId::ALL
            .into_iter()
            .find(|t| format!("{t:?}").eq_ignore_ascii_case(text.trim()))
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

pub type Bindings = BTreeMap<&'static str, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: String,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{|\}\}|\{([a-z_]+)\}").unwrap())
}

impl PromptTemplate {
    pub fn placeholders(&self) -> BTreeSet<String> {
        placeholder_re()
            .captures_iter(&self.text)
            .filter_map(|c| c.get(1).map(|m| m.as_str().to_string()))
            .collect()
    }

    /// Substitute every placeholder. Fails on the first unbound one.
    pub fn render(&self, bindings: &Bindings) -> Result<String, LlmError> {
        let mut out = String::with_capacity(self.text.len() * 2);
        let mut last = 0;
        for caps in placeholder_re().captures_iter(&self.text) {
            let whole = caps.get(0).unwrap();
            out.push_str(&self.text[last..whole.start()]);
            match caps.get(1) {
                Some(name) => {
                    let value = bindings.get(name.as_str()).ok_or_else(|| {
                        LlmError::Template(format!(
                            "template {} has unbound placeholder {{{}}}",
                            self.id,
                            name.as_str()
                        ))
                    })?;
                    out.push_str(value);
                }
                None => out.push_str(&whole.as_str()[..1]),
            }
            last = whole.end();
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

/// Templates keyed by id, plus optional default few-shot blocks.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    templates: BTreeMap<TemplateId, PromptTemplate>,
    few_shot: BTreeMap<TemplateId, String>,
    hash: String,
}

impl PromptCatalog {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("built-in catalog parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Template(format!("cannot read catalog {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let header = Regex::new(r"^===\s*([A-Za-z]+)(\.few_shot)?\s*===\s*$").unwrap();
        let mut templates = BTreeMap::new();
        let mut few_shot = BTreeMap::new();
        let mut current: Option<(TemplateId, bool, Vec<&str>)> = None;

        let mut flush = |section: Option<(TemplateId, bool, Vec<&str>)>| {
            if let Some((id, is_few_shot, lines)) = section {
                let body = lines.join("\n").trim_matches('\n').to_string();
                if is_few_shot {
                    few_shot.insert(id, body);
                } else {
                    templates.insert(id, PromptTemplate { id, text: body });
                }
            }
        };

        for line in text.lines() {
            if let Some(caps) = header.captures(line) {
                let name = &caps[1];
                let id = TemplateId::parse(name)
                    .ok_or_else(|| LlmError::Template(format!("unknown template section `{name}`")))?;
                flush(current.take());
                current = Some((id, caps.get(2).is_some(), Vec::new()));
            } else if let Some((_, _, lines)) = current.as_mut() {
                lines.push(line);
            } else if !(line.trim().is_empty() || line.starts_with('#')) {
                return Err(LlmError::Template(format!("text outside any section: `{line}`")));
            }
        }
        flush(current.take());

        for id in TemplateId::ALL {
            if !templates.contains_key(&id) {
                return Err(LlmError::Template(format!("catalog is missing template {id}")));
            }
        }
        Ok(PromptCatalog {
            templates,
            few_shot,
            hash: sha256_hex(text.as_bytes()),
        })
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn few_shot(&self, id: TemplateId) -> Option<&str> {
        self.few_shot.get(&id).map(String::as_str)
    }

    /// SHA-256 of the catalog source text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Render `id`, binding `{few_shot_block}` from the catalog when the
    /// caller did not bind it.
    pub fn render(&self, id: TemplateId, bindings: &Bindings) -> Result<String, LlmError> {
        let template = self.template(id);
        if bindings.contains_key("few_shot_block") || !template.placeholders().contains("few_shot_block") {
            return template.render(bindings);
        }
        let mut with_default = bindings.clone();
        let block = self
            .few_shot(id)
            .map(|b| format!("\n{b}\n"))
            .unwrap_or_default();
        with_default.insert("few_shot_block", block);
        template.render(&with_default)
    }
}

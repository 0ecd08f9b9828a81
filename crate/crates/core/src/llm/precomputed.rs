//! Predictions computed elsewhere (e.g. a fine-tuned classifier's outputs or
//! gold support annotations), read from JSON lines.
//!
//! Each line is `{"pair_id", "triple_id", "label"}` or
//! `{"pair_id", "triple_id", "support_ids"}`, with an optional `"direction"`
//! (`"pre"`/`"post"`) for pairs whose two stories reuse triple ids. Labels may
//! be `Relevant`/`Irrelevant` or one of the five event types; event types are
//! collapsed with Consistent and Unforgotten as Relevant and everything else
//! as Irrelevant.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::LlmError;
use crate::corpus::{Direction, EventType, InstanceKey, RelevanceLabel};

#[derive(Debug, Deserialize)]
struct Line {
    pair_id: Value,
    triple_id: Value,
    #[serde(default)]
    direction: Option<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    support_ids: Option<Vec<Value>>,
}

type LooseKey = (String, String, Option<Direction>);

#[derive(Debug, Clone, Default)]
pub struct PrecomputedLabelSource {
    labels: HashMap<LooseKey, RelevanceLabel>,
    event_types: HashMap<LooseKey, EventType>,
    support: HashMap<LooseKey, Vec<String>>,
}

fn id_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Relevance of a label string as written in a predictions file.
pub fn relevance_of_label(text: &str) -> Option<RelevanceLabel> {
    match text.trim().to_ascii_lowercase().as_str() {
        "relevant" => Some(RelevanceLabel::Relevant),
        "irrelevant" => Some(RelevanceLabel::Irrelevant),
        _ => EventType::parse_loose(text).map(|t| {
            RelevanceLabel::from_bool(matches!(t, EventType::Consistent | EventType::Unforgotten))
        }),
    }
}

impl PrecomputedLabelSource {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            LlmError::Io(m) => LlmError::Io(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut source = PrecomputedLabelSource::default();
        for (n, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let bad = |m: String| LlmError::Io(format!("line {}: {m}", n + 1));
            let line: Line = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
            let pair = id_text(&line.pair_id).ok_or_else(|| bad("pair_id must be a string or number".into()))?;
            let triple = id_text(&line.triple_id).ok_or_else(|| bad("triple_id must be a string or number".into()))?;
            let direction = match &line.direction {
                Some(d) => Some(Direction::parse(d).ok_or_else(|| bad(format!("unknown direction `{d}`")))?),
                None => None,
            };
            let key = (pair, triple, direction);
            if let Some(label) = &line.label {
                let relevance = relevance_of_label(label).ok_or_else(|| bad(format!("unknown label `{label}`")))?;
                if let Some(t) = EventType::parse_loose(label) {
                    source.event_types.insert(key.clone(), t);
                }
                source.labels.insert(key.clone(), relevance);
            }
            if let Some(ids) = &line.support_ids {
                let ids = ids
                    .iter()
                    .map(|v| id_text(v).ok_or_else(|| bad("support id must be a string or number".into())))
                    .collect::<Result<Vec<_>, _>>()?;
                source.support.insert(key, ids);
            }
            if line.label.is_none() && line.support_ids.is_none() {
                return Err(bad("record has neither label nor support_ids".into()));
            }
        }
        Ok(source)
    }

    fn find<'a, T>(map: &'a HashMap<LooseKey, T>, key: &InstanceKey) -> Option<&'a T> {
        map.get(&(key.pair_id.clone(), key.triple_id.clone(), Some(key.direction)))
            .or_else(|| map.get(&(key.pair_id.clone(), key.triple_id.clone(), None)))
    }

    pub fn label(&self, key: &InstanceKey) -> Result<RelevanceLabel, LlmError> {
        Self::find(&self.labels, key)
            .copied()
            .ok_or_else(|| LlmError::MissingPrediction(key.to_string()))
    }

    /// The five-way label, when the file carried one.
    pub fn event_type(&self, key: &InstanceKey) -> Option<EventType> {
        Self::find(&self.event_types, key).copied()
    }

    pub fn support_ids(&self, key: &InstanceKey) -> Result<&[String], LlmError> {
        Self::find(&self.support, key)
            .map(Vec::as_slice)
            .ok_or_else(|| LlmError::MissingPrediction(key.to_string()))
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn support_count(&self) -> usize {
        self.support.len()
    }
}

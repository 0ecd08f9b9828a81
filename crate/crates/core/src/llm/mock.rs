//! Scripted chat provider for offline runs and tests.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, LlmError, TemplateId};

/// Key used for entries that apply to every instance of a template.
pub const ANY_INSTANCE: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub template: TemplateId,
    /// Instance key (`pair/direction/triple`) or `*`.
    #[serde(default = "any_instance")]
    pub instance: String,
    /// Response for attempt 0, 1, ...; the last one repeats.
    pub responses: Vec<String>,
}

fn any_instance() -> String {
    ANY_INSTANCE.to_string()
}

/// Ordered map from (template, instance) to canned responses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond(&mut self, template: TemplateId, instance: impl Into<String>, response: impl Into<String>) -> &mut Self {
        self.respond_seq(template, instance, vec![response.into()])
    }

    pub fn respond_seq(&mut self, template: TemplateId, instance: impl Into<String>, responses: Vec<String>) -> &mut Self {
        let instance = instance.into();
        self.entries.retain(|e| !(e.template == template && e.instance == instance));
        self.entries.push(ScriptEntry {
            template,
            instance,
            responses,
        });
        self
    }

    pub fn respond_any(&mut self, template: TemplateId, response: impl Into<String>) -> &mut Self {
        self.respond(template, ANY_INSTANCE, response)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("serializable");
        std::fs::write(path, json).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }

    fn lookup(&self, template: TemplateId, instance: Option<&str>, attempt: u32) -> Option<&str> {
        fn pick(e: &ScriptEntry, attempt: u32) -> Option<&str> {
            let i = (attempt as usize).min(e.responses.len().saturating_sub(1));
            e.responses.get(i).map(String::as_str)
        }
        instance
            .and_then(|key| {
                self.entries
                    .iter()
                    .find(|e| e.template == template && e.instance == key)
            })
            .or_else(|| {
                self.entries
                    .iter()
                    .find(|e| e.template == template && e.instance == ANY_INSTANCE)
            })
            .and_then(|e| pick(e, attempt))
    }
}

/// Provider answering from a [`MockScript`]. Unmatched requests are errors.
pub struct MockChat {
    name: String,
    script: MockScript,
    calls: AtomicUsize,
    per_template: Mutex<BTreeMap<TemplateId, usize>>,
}

impl MockChat {
    pub fn new(script: MockScript) -> Self {
        Self::named("mock", script)
    }

    pub fn named(name: impl Into<String>, script: MockScript) -> Self {
        MockChat {
            name: name.into(),
            script,
            calls: AtomicUsize::new(0),
            per_template: Mutex::new(BTreeMap::new()),
        }
    }

    /// Total requests received (including unmatched ones).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, template: TemplateId) -> usize {
        self.per_template
            .lock()
            .unwrap()
            .get(&template)
            .copied()
            .unwrap_or(0)
    }
}

impl ChatProvider for MockChat {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &str {
        "scripted"
    }

    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self
            .per_template
            .lock()
            .unwrap()
            .entry(request.template)
            .or_default() += 1;
        self.script
            .lookup(request.template, request.instance_key, request.attempt)
            .map(str::to_string)
            .ok_or_else(|| LlmError::MockUnmatched {
                template: request.template,
                instance: request.instance_key.unwrap_or("-").to_string(),
            })
    }
}

//! Chat-completion access for every LLM-backed step.
//!
//! [`LlmClient`] renders a catalog template, consults the response cache,
//! calls the provider and appends the exchange to an optional run trace.
//! Parsers for the replies live in [`parse`].

mod cache;
mod mock;
mod openai;
pub mod parse;
mod precomputed;
mod prompt;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::hashing::sha256_hex;

pub use cache::ResponseCache;
pub use mock::{MockChat, MockScript, ScriptEntry, ANY_INSTANCE};
pub use openai::{OpenAiChat, OpenAiChatConfig, CHAT_API_KEY_ENV};
pub use parse::{parse_consistency, parse_relevance, parse_support_ids, Consistency, SupportIds};
pub use precomputed::{relevance_of_label, PrecomputedLabelSource};
pub use prompt::{Bindings, PromptCatalog, PromptTemplate, TemplateId, DEFAULT_CATALOG};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider error: {0}")]
    Provider(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("mock script has no response for {template} / {instance}")]
    MockUnmatched { template: TemplateId, instance: String },
    #[error("no precomputed prediction for {0}")]
    MissingPrediction(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub template: TemplateId,
    /// `pair/direction/triple` of the instance being classified, if any.
    pub instance_key: Option<&'a str>,
    pub prompt: &'a str,
    /// 0 for the first request, 1 for the reminder retry.
    pub attempt: u32,
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, LlmError>;
}

/// One completed exchange.
#[derive(Debug, Clone)]
pub struct Completion {
    pub prompt: String,
    pub prompt_hash: String,
    pub response: String,
    pub cached: bool,
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    timestamp: String,
    provider: &'a str,
    model: &'a str,
    template: TemplateId,
    instance: Option<&'a str>,
    prompt_hash: &'a str,
    cached: bool,
    prompt: &'a str,
    response: &'a str,
}

/// Append-only JSON-lines log of every exchange, with wall-clock timestamps.
pub struct TraceLog {
    file: Mutex<File>,
}

impl TraceLog {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(TraceLog { file: Mutex::new(file) })
    }

    fn record(&self, record: &TraceRecord<'_>) {
        let line = serde_json::to_string(record).expect("serializable");
        if let Err(e) = writeln!(self.file.lock().unwrap(), "{line}") {
            log::warn!("trace log write failed: {e}");
        }
    }
}

/// Reminder appended to a prompt when the first reply could not be parsed.
pub const RETRY_REMINDER: &str =
    "\n\nReminder: reply with the final line `ANSWER: ` followed by your answer, exactly as requested.";

#[derive(Clone)]
pub struct LlmClient {
    provider: Arc<dyn ChatProvider>,
    catalog: Arc<PromptCatalog>,
    cache: Option<Arc<ResponseCache>>,
    trace: Option<Arc<TraceLog>>,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn ChatProvider>, catalog: Arc<PromptCatalog>) -> Self {
        LlmClient {
            provider,
            catalog,
            cache: None,
            trace: None,
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_trace(mut self, trace: Arc<TraceLog>) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn provider(&self) -> &dyn ChatProvider {
        self.provider.as_ref()
    }

    pub fn catalog(&self) -> &PromptCatalog {
        &self.catalog
    }

    /// Render `template` with `bindings` and obtain a reply. Attempt 1 and
    /// later append [`RETRY_REMINDER`] to the prompt.
    pub fn complete(
        &self,
        template: TemplateId,
        bindings: &Bindings,
        instance_key: Option<&str>,
        attempt: u32,
    ) -> Result<Completion, LlmError> {
        let mut prompt = self.catalog.render(template, bindings)?;
        if attempt > 0 {
            prompt.push_str(RETRY_REMINDER);
        }
        let prompt_hash = sha256_hex(prompt.as_bytes());
        let cache_key = ResponseCache::key(self.provider.name(), self.provider.model(), &prompt);

        let (response, cached) = match self.cache.as_ref().and_then(|c| c.get(&cache_key)) {
            Some(hit) => (hit, true),
            None => {
                let response = self.provider.chat(&ChatRequest {
                    template,
                    instance_key,
                    prompt: &prompt,
                    attempt,
                })?;
                if let Some(cache) = &self.cache {
                    cache.put(&cache_key, self.provider.model(), &response);
                }
                (response, false)
            }
        };

        if let Some(trace) = &self.trace {
            trace.record(&TraceRecord {
                timestamp: chrono::Utc::now().to_rfc3339(),
                provider: self.provider.name(),
                model: self.provider.model(),
                template,
                instance: instance_key,
                prompt_hash: &prompt_hash,
                cached,
                prompt: &prompt,
                response: &response,
            });
        }
        Ok(Completion {
            prompt,
            prompt_hash,
            response,
            cached,
        })
    }
}

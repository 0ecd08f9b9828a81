use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::http::{JsonClient, RetryPolicy};

pub const EMBED_API_KEY_ENV: &str = "GER_EMBED_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteEmbedderConfig {
    /// Full URL of the embeddings endpoint, e.g. `https://host/v1/embeddings`.
    pub endpoint: String,
    pub model: String,
    pub dimension: usize,
    pub max_in_flight: usize,
    pub batch_size: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        RemoteEmbedderConfig {
            endpoint: "http://localhost:8080/v1/embeddings".into(),
            model: "all-MiniLM-L6-v2".into(),
            dimension: 384,
            max_in_flight: 4,
            batch_size: 64,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: JsonClient,
}

impl RemoteEmbedder {
    /// The API key is read from `GER_EMBED_API_KEY` when set.
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let key = std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: RemoteEmbedderConfig, api_key: Option<String>) -> Self {
        let client = JsonClient::new(
            config.endpoint.clone(),
            api_key,
            config.retry,
            config.max_in_flight,
            Duration::from_secs(config.timeout_secs),
        );
        RemoteEmbedder { config, client }
    }

    fn request(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = json!({ "model": self.config.model, "input": texts });
        let response = self
            .client
            .post(&body)
            .map_err(|e| EmbedError::Provider(e.to_string()))?;
        parse_embeddings(&response, texts.len(), self.config.dimension)
    }
}

fn parse_embeddings(response: &Value, expected: usize, dimension: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let data = response
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| EmbedError::Provider("response has no `data` array".into()))?;
    if data.len() != expected {
        return Err(EmbedError::Provider(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut out: Vec<Option<EmbeddingVector>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let index = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let values: Vec<f64> = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Provider("item has no `embedding`".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| EmbedError::Provider("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if values.len() != dimension {
            return Err(EmbedError::DimensionMismatch(values.len(), dimension));
        }
        let slot = out
            .get_mut(index)
            .ok_or_else(|| EmbedError::Provider(format!("embedding index {index} out of range")))?;
        *slot = Some(EmbeddingVector::normalized(values));
    }
    out.into_iter()
        .map(|v| v.ok_or_else(|| EmbedError::Provider("missing embedding index".into())))
        .collect()
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        "openai-embeddings"
    }

    fn model(&self) -> &str {
        &self.config.model
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed_normalized(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.request(&[text.to_string()])?;
        Ok(v.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}

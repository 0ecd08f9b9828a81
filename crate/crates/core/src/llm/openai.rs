//! OpenAI-compatible `/chat/completions` client.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, LlmError};
use crate::http::{JsonClient, RetryPolicy};

pub const CHAT_API_KEY_ENV: &str = "GER_CHAT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiChatConfig {
    /// Full URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub system_prompt: Option<String>,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for OpenAiChatConfig {
    fn default() -> Self {
        OpenAiChatConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo-0125".into(),
            temperature: 0.0,
            max_tokens: None,
            system_prompt: None,
            max_in_flight: 4,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct OpenAiChat {
    name: String,
    config: OpenAiChatConfig,
    client: JsonClient,
}

impl OpenAiChat {
    /// The API key is read from `GER_CHAT_API_KEY` when set.
    pub fn new(name: impl Into<String>, config: OpenAiChatConfig) -> Self {
        let key = std::env::var(CHAT_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(name, config, key)
    }

    pub fn with_api_key(name: impl Into<String>, config: OpenAiChatConfig, api_key: Option<String>) -> Self {
        let client = JsonClient::new(
            config.endpoint.clone(),
            api_key,
            config.retry,
            config.max_in_flight,
            Duration::from_secs(config.timeout_secs),
        );
        OpenAiChat {
            name: name.into(),
            config,
            client,
        }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        if let Some(max) = self.config.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

fn extract_content(response: &Value) -> Result<String, LlmError> {
    response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Provider("response has no choices[0].message.content".into()))
}

impl ChatProvider for OpenAiChat {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &str {
        &self.config.model
    }

    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, LlmError> {
        let response = self
            .client
            .post(&self.request_body(request.prompt))
            .map_err(|e| LlmError::Provider(e.to_string()))?;
        extract_content(&response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_has_model_messages_temperature() {
        let chat = OpenAiChat::with_api_key(
            "gpt",
            OpenAiChatConfig {
                system_prompt: Some("be brief".into()),
                ..Default::default()
            },
            None,
        );
        let body = chat.request_body("hello");
        assert_eq!(body["model"], "gpt-3.5-turbo-0125");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hello");
        assert!(body.get("max_tokens").is_none());
    }

    #[test]
    fn extracts_first_choice() {
        let r = json!({"choices": [{"message": {"role": "assistant", "content": "ANSWER: Relevant"}}]});
        assert_eq!(extract_content(&r).unwrap(), "ANSWER: Relevant");
        assert!(extract_content(&json!({"choices": []})).is_err());
    }
}

//! Blocking JSON-over-HTTP plumbing shared by the remote chat and embedding
//! providers: bearer auth, bounded in-flight requests, retry with
//! exponential backoff.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Exhausted {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("request to {url} rejected with status {status}: {body}")]
    Rejected { url: String, status: u16, body: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(20)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// Counting semaphore bounding concurrent requests.
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut current = self.current.lock().unwrap();
        while *current >= self.max {
            current = self.freed.wait(current).unwrap();
        }
        *current += 1;
        Permit { limit: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limit.current.lock().unwrap() -= 1;
        self.limit.freed.notify_one();
    }
}

/// JSON POST client for one endpoint.
pub struct JsonClient {
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    limit: InFlightLimit,
    client: reqwest::blocking::Client,
}

impl JsonClient {
    pub fn new(url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy, max_in_flight: usize, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client");
        JsonClient {
            url: url.into(),
            api_key,
            retry,
            limit: InFlightLimit::new(max_in_flight),
            client,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POST `body` and return the parsed JSON response. Connection errors,
    /// 429 and 5xx responses are retried; other 4xx fail immediately.
    pub fn post(&self, body: &Value) -> Result<Value, HttpError> {
        let _permit = self.limit.acquire();
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.backoff(attempt - 1));
            }
            let mut request = self.client.post(&self.url).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    let text = response.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&text).map_err(|e| HttpError::Exhausted {
                            url: self.url.clone(),
                            attempts: attempt + 1,
                            message: format!("invalid JSON response: {e}"),
                        });
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last = format!("status {status}: {text}");
                        log::warn!("{}: {last}; retrying", self.url);
                        continue;
                    }
                    return Err(HttpError::Rejected {
                        url: self.url.clone(),
                        status: status.as_u16(),
                        body: text,
                    });
                }
                Err(e) => {
                    last = e.to_string();
                    log::warn!("{}: {last}; retrying", self.url);
                }
            }
        }
        Err(HttpError::Exhausted {
            url: self.url.clone(),
            attempts,
            message: last,
        })
    }
}

//! Blocking HTTP clients for OpenAI-style `/v1/embeddings` and
//! `/v1/chat/completions` endpoints, with bounded in-flight requests and
//! exponential-backoff retries.

use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::embedding::{Embedder, EmbeddingVector, ProviderConfig};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "RAGEV_API_KEY";
pub const BASE_URL_ENV: &str = "RAGEV_BASE_URL";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(4),
        }
    }
}

impl RetryPolicy {
    fn delay_before(&self, attempt: u32) -> Duration {
        let factor = 1u32 << (attempt.saturating_sub(1)).min(16);
        (self.base_delay * factor).min(self.max_delay)
    }
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut current = self.current.lock().expect("limiter poisoned");
        while *current >= self.max {
            current = self.freed.wait(current).expect("limiter poisoned");
        }
        *current += 1;
        InFlightGuard { limiter: self }
    }
}

pub struct InFlightGuard<'a> {
    limiter: &'a InFlightLimiter,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut current = self.limiter.current.lock().expect("limiter poisoned");
        *current -= 1;
        self.limiter.freed.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

pub struct JsonClient {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    limiter: InFlightLimiter,
}

impl JsonClient {
    pub fn new(base_url: &str, max_in_flight: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        JsonClient {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: RetryPolicy::default(),
            limiter: InFlightLimiter::new(max_in_flight),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}{}", self.base_url, path);
        let payload = serde_json::to_string(body)?;
        let _slot = self.limiter.acquire();
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before(attempt - 1));
            }
            match self.post_once(&url, &payload) {
                Ok(value) => return Ok(value),
                Err(Failure::Fatal(detail)) => {
                    return Err(Error::Transport { attempts: attempt, detail })
                }
                Err(Failure::Retryable(detail)) => last = detail,
            }
        }
        Err(Error::Transport {
            attempts: self.retry.attempts.max(1),
            detail: last,
        })
    }

    fn post_once(&self, url: &str, payload: &str) -> std::result::Result<Value, Failure> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send(payload)
            .map_err(|e| Failure::Retryable(format!("POST {url}: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(format!("POST {url}: reading body: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(format!("POST {url}: invalid JSON response: {e}"))),
            429 | 500..=599 => Err(Failure::Retryable(format!("POST {url}: HTTP {status}: {text}"))),
            _ => Err(Failure::Fatal(format!("POST {url}: HTTP {status}: {text}"))),
        }
    }
}

/// Embeddings from a remote `/v1/embeddings` endpoint. The dimension is
/// learned from the first response and enforced afterwards.
pub struct RemoteEmbedder {
    client: JsonClient,
    model_name: String,
    dim: OnceLock<usize>,
}

const EMBED_BATCH: usize = 64;

impl RemoteEmbedder {
    pub fn new(cfg: &ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let url = cfg.endpoint_url.as_deref().unwrap_or_default();
        Ok(RemoteEmbedder {
            client: JsonClient::new(url, cfg.max_in_flight),
            model_name: cfg.model_name.clone(),
            dim: OnceLock::new(),
        })
    }

    pub fn with_client(client: JsonClient, model_name: impl Into<String>) -> Self {
        RemoteEmbedder { client, model_name: model_name.into(), dim: OnceLock::new() }
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let body = json!({ "model": self.model_name, "input": texts });
        let mut response: EmbeddingsResponse = serde_json::from_value(self.client.post("/v1/embeddings", &body)?)
            .map_err(|e| Error::Transport { attempts: 1, detail: format!("unexpected embeddings response: {e}") })?;
        if response.data.len() != texts.len() {
            return Err(Error::Transport {
                attempts: 1,
                detail: format!("asked for {} embeddings, got {}", texts.len(), response.data.len()),
            });
        }
        response.data.sort_by_key(|item| item.index);
        response
            .data
            .into_iter()
            .map(|item| {
                let dim = *self.dim.get_or_init(|| item.embedding.len());
                if item.embedding.len() != dim {
                    return Err(Error::Transport {
                        attempts: 1,
                        detail: format!("endpoint changed dimension from {dim} to {}", item.embedding.len()),
                    });
                }
                EmbeddingVector::new(item.embedding)
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_BATCH) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    // absent indexes keep response order, the sort being stable
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatCompletion {
    pub content: String,
    pub finish_reason: Option<String>,
}

pub struct ChatClient {
    client: JsonClient,
}

impl ChatClient {
    pub fn new(client: JsonClient) -> Self {
        ChatClient { client }
    }

    pub fn complete(
        &self,
        model: &str,
        messages: &[ChatMessage],
        temperature: f64,
        max_tokens: u32,
    ) -> Result<ChatCompletion> {
        let body = json!({
            "model": model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        });
        let value = self.client.post("/v1/chat/completions", &body)?;
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| Error::Transport { attempts: 1, detail: "response has no choices".into() })?;
        let content = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Transport { attempts: 1, detail: "choice has no message content".into() })?;
        Ok(ChatCompletion {
            content: content.to_string(),
            finish_reason: choice.get("finish_reason").and_then(Value::as_str).map(str::to_string),
        })
    }
}

//! OpenAI-compatible HTTP backend.
//!
//! Chat: `POST {base}/chat/completions` with `{model, messages, temperature,
//! max_tokens}`, reply text at `choices[0].message.content`.
//! Embeddings: `POST {base}/embeddings` with `{model, input}`, vector at
//! `data[0].embedding`.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, ChatExchange, GatewayError, Role};
use crate::metrics::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub api_key: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpBackendConfig {
    /// Reads `DRAFT_API_BASE` and `DRAFT_API_KEY`.
    pub fn from_env(chat_model: &str, embedding_model: &str, timeout: Duration) -> Result<Self, GatewayError> {
        let var = |name: &str| {
            std::env::var(name)
                .ok()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| GatewayError::Config(format!("environment variable {name} is not set")))
        };
        Ok(HttpBackendConfig {
            base_url: var("DRAFT_API_BASE")?,
            api_key: var("DRAFT_API_KEY")?,
            chat_model: chat_model.to_string(),
            embedding_model: embedding_model.to_string(),
            timeout,
            retry: RetryPolicy::default(),
        })
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(Value),
    Retry(GatewayError),
    Fail(GatewayError),
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, agent }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let result = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body);
        let mut resp = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(GatewayError::Timeout),
            Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(GatewayError::Timeout),
            Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string())),
        };
        match status {
            200..=299 => match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fail(GatewayError::Decode(e.to_string())),
            },
            429 => Attempt::Retry(GatewayError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(GatewayError::Provider { status, body: text }),
            _ => Attempt::Fail(GatewayError::Provider { status, body: text }),
        }
    }

    /// POSTs with retries on 429, 5xx, timeouts and transport failures.
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = self.endpoint(path);
        let policy = self.config.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let err = match self.attempt(&url, body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => e,
            };
            if attempts > policy.max_retries {
                return Err(match err {
                    GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts },
                    other => other,
                });
            }
            log::debug!("retrying {url} after {err}");
            thread::sleep(policy.base_delay * 2u32.pow(attempts - 1));
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, _role: Role, _scope: Option<&str>, exchange: &ChatExchange) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.config.chat_model,
            "messages": [
                {"role": "system", "content": exchange.system},
                {"role": "user", "content": exchange.user},
            ],
            "temperature": exchange.temperature,
            "max_tokens": exchange.max_output_chars.div_ceil(4),
        });
        let reply = self.post_json("chat/completions", &body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Decode("missing choices[0].message.content".into()))
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let body = json!({"model": self.config.embedding_model, "input": text});
        let reply = self.post_json("embeddings", &body)?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Decode("missing data[0].embedding".into()))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| GatewayError::Decode("non-numeric embedding".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddingVector::new(values))
    }

    fn describe(&self) -> String {
        format!(
            "http(base={}, chat={}, embedding={})",
            self.config.base_url, self.config.chat_model, self.config.embedding_model
        )
    }
}

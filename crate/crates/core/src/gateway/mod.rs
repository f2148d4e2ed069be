//! Chat-completion and embedding access behind one interface.
//!
//! [`Gateway`] wraps a provider [`Backend`] (scripted mock or HTTP) and adds
//! the embedding cache, the request-rate budget and call counters. Agents
//! only see the [`LanguageModel`] trait, so tests can substitute their own.

mod http;
mod limiter;
mod mock;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EmbeddingVector;

pub use http::{HttpBackend, HttpBackendConfig, RetryPolicy};
pub use limiter::TokenBucket;
pub use mock::{hashed_embedding, MockBackend, TapeEntry, MOCK_EMBEDDING_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Explorer,
    Analyzer,
    Rewriter,
    Judge,
    /// Tool-calling loop used to produce evaluation traces.
    Runner,
}

impl Role {
    pub fn temperature(self) -> f64 {
        match self {
            Role::Explorer => 1.0,
            Role::Analyzer | Role::Rewriter => 0.2,
            Role::Judge | Role::Runner => 0.0,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Explorer => "explorer",
            Role::Analyzer => "analyzer",
            Role::Rewriter => "rewriter",
            Role::Judge => "judge",
            Role::Runner => "runner",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_chars: usize,
}

impl ChatExchange {
    pub fn new(role: Role, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatExchange {
            system: system.into(),
            user: user.into(),
            temperature: role.temperature(),
            max_output_chars: 8000,
        }
    }

    /// Full prompt text, as matched against mock tape substrings.
    pub fn prompt_text(&self) -> String {
        format!("{}\n{}", self.system, self.user)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out")]
    Timeout,
    #[error("provider error {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("could not decode provider reply: {0}")]
    Decode(String),
    #[error("mock tape exhausted for role {role}{}", scope_suffix(.scope))]
    TapeExhausted { role: Role, scope: Option<String> },
    #[error("mock tape entry for role {role} expects `{expected}` in the prompt")]
    TapeMismatch { role: Role, expected: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("chat exchange has an empty user message")]
    EmptyPrompt,
    #[error("gateway misconfigured: {0}")]
    Config(String),
}

fn scope_suffix(scope: &Option<String>) -> String {
    scope.as_ref().map(|s| format!(" (tool {s})")).unwrap_or_default()
}

impl GatewayError {
    /// Errors that mean the whole run cannot proceed, as opposed to one tool.
    pub fn is_infrastructure(&self) -> bool {
        matches!(self, GatewayError::Config(_))
    }
}

/// A raw provider.
pub trait Backend: Send + Sync {
    fn complete(&self, role: Role, scope: Option<&str>, exchange: &ChatExchange) -> Result<String, GatewayError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;

    fn describe(&self) -> String;
}

/// What the agents talk to.
///
/// `scope` namespaces a call by tool name so per-tool scripted tapes stay
/// deterministic when tools run concurrently.
pub trait LanguageModel: Send + Sync {
    fn chat(&self, role: Role, scope: Option<&str>, exchange: &ChatExchange) -> Result<String, GatewayError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub chat_calls: u64,
    pub embed_requests: u64,
    pub embed_backend_calls: u64,
    pub cache_hits: u64,
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: Option<Mutex<HashMap<String, EmbeddingVector>>>,
    limiter: Option<TokenBucket>,
    chat_calls: AtomicU64,
    embed_requests: AtomicU64,
    embed_backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Gateway {
            backend: Box::new(backend),
            cache: Some(Mutex::new(HashMap::new())),
            limiter: None,
            chat_calls: AtomicU64::new(0),
            embed_requests: AtomicU64::new(0),
            embed_backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn with_rate_limit(mut self, limiter: TokenBucket) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn describe(&self) -> String {
        self.backend.describe()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            chat_calls: self.chat_calls.load(Ordering::Relaxed),
            embed_requests: self.embed_requests.load(Ordering::Relaxed),
            embed_backend_calls: self.embed_backend_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    fn throttle(&self) {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
    }
}

impl LanguageModel for Gateway {
    fn chat(&self, role: Role, scope: Option<&str>, exchange: &ChatExchange) -> Result<String, GatewayError> {
        if exchange.user.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        self.throttle();
        self.chat_calls.fetch_add(1, Ordering::Relaxed);
        self.backend.complete(role, scope, exchange)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        self.embed_requests.fetch_add(1, Ordering::Relaxed);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().unwrap().get(text) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit.clone());
            }
        }
        self.throttle();
        self.embed_backend_calls.fetch_add(1, Ordering::Relaxed);
        let vector = self.backend.embed(text)?;
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().insert(text.to_string(), vector.clone());
        }
        Ok(vector)
    }
}

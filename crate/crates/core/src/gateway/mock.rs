use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, ChatExchange, GatewayError, Role};
use crate::metrics::{tokenize, EmbeddingVector};

pub const MOCK_EMBEDDING_DIM: usize = 64;

/// One scripted reply.
///
/// Entries are consumed in order per `(tool, role_tag)`. An entry without a
/// `tool` goes to the shared queue, which a scoped call only reaches when no
/// entry was scripted for its tool at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapeEntry {
    #[serde(alias = "role")]
    pub role_tag: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_substring: Option<String>,
    pub response: String,
}

impl TapeEntry {
    pub fn new(role: Role, response: impl Into<String>) -> Self {
        TapeEntry {
            role_tag: role,
            tool: None,
            match_substring: None,
            response: response.into(),
        }
    }

    pub fn for_tool(mut self, tool: impl Into<String>) -> Self {
        self.tool = Some(tool.into());
        self
    }

    pub fn expecting(mut self, substring: impl Into<String>) -> Self {
        self.match_substring = Some(substring.into());
        self
    }
}

type QueueKey = (Option<String>, Role);

/// Deterministic backend: scripted chat replies and hashed bag-of-words
/// embeddings.
pub struct MockBackend {
    queues: Mutex<HashMap<QueueKey, VecDeque<TapeEntry>>>,
    seed: u64,
}

impl MockBackend {
    pub fn new(entries: Vec<TapeEntry>, seed: u64) -> Self {
        let mut queues: HashMap<QueueKey, VecDeque<TapeEntry>> = HashMap::new();
        for e in entries {
            queues.entry((e.tool.clone(), e.role_tag)).or_default().push_back(e);
        }
        MockBackend {
            queues: Mutex::new(queues),
            seed,
        }
    }

    pub fn from_tape_json(bytes: &[u8], seed: u64) -> Result<Self, serde_json::Error> {
        let entries: Vec<TapeEntry> = serde_json::from_slice(bytes)?;
        Ok(MockBackend::new(entries, seed))
    }
}

impl Backend for MockBackend {
    fn complete(&self, role: Role, scope: Option<&str>, exchange: &ChatExchange) -> Result<String, GatewayError> {
        let mut queues = self.queues.lock().unwrap();
        let scoped: QueueKey = (scope.map(str::to_string), role);
        let key = if queues.contains_key(&scoped) {
            scoped
        } else {
            (None, role)
        };
        let exhausted = || GatewayError::TapeExhausted {
            role,
            scope: scope.map(str::to_string),
        };
        let queue = queues.get_mut(&key).ok_or_else(exhausted)?;
        let entry = queue.front().ok_or_else(exhausted)?;
        if let Some(expected) = &entry.match_substring {
            if !exchange.prompt_text().contains(expected.as_str()) {
                return Err(GatewayError::TapeMismatch {
                    role,
                    expected: expected.clone(),
                });
            }
        }
        Ok(queue.pop_front().expect("front checked").response)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(hashed_embedding(text, self.seed))
    }

    fn describe(&self) -> String {
        format!("mock(seed={}, dim={MOCK_EMBEDDING_DIM})", self.seed)
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Token counts folded into [`MOCK_EMBEDDING_DIM`] buckets by a seeded
/// FNV-1a hash of each token.
pub fn hashed_embedding(text: &str, seed: u64) -> EmbeddingVector {
    let mut values = vec![0.0; MOCK_EMBEDDING_DIM];
    for token in tokenize(text).tokens() {
        let bucket = (fnv1a(seed, token.as_bytes()) % MOCK_EMBEDDING_DIM as u64) as usize;
        values[bucket] += 1.0;
    }
    EmbeddingVector::new(values)
}

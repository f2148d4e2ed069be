#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use draft::executor::{load_sandbox, SandboxRegistry, DEFAULT_TRUNCATION_CHARS};
use draft::gateway::{ChatExchange, Gateway, GatewayError, LanguageModel, MockBackend, Role, TapeEntry};
use draft::metrics::EmbeddingVector;
use draft::model::{parse_documentation_set, ToolDocumentation};

pub const TV: &str = "GET_person_person_id_tv_credits";
pub const SEARCH: &str = "GET_search_person";
pub const INVALID_ID: &str = r#"{"success": false, "status_code": 6, "status_message": "Invalid id: The pre-requisite id is invalid or not found."}"#;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn tmdb_docs() -> Vec<ToolDocumentation> {
    parse_documentation_set(&std::fs::read(fixture("tmdb/tools.json")).unwrap()).unwrap()
}

pub fn tv_doc() -> ToolDocumentation {
    tmdb_docs().into_iter().find(|d| d.name == TV).unwrap()
}

pub fn tmdb_tape_entries() -> Vec<TapeEntry> {
    serde_json::from_slice(&std::fs::read(fixture("tmdb/tape.json")).unwrap()).unwrap()
}

pub fn tmdb_gateway(seed: u64) -> Gateway {
    Gateway::new(MockBackend::new(tmdb_tape_entries(), seed))
}

pub fn tmdb_sandbox() -> SandboxRegistry {
    load_sandbox(&fixture("tmdb/sandbox"), DEFAULT_TRUNCATION_CHARS).unwrap()
}

pub fn mock(entries: Vec<TapeEntry>) -> Gateway {
    Gateway::new(MockBackend::new(entries, 0))
}

/// Unit vector at cosine `s` from `(1, 0)`.
pub fn at_similarity(s: f64) -> EmbeddingVector {
    EmbeddingVector::new(vec![s, (1.0 - s * s).max(0.0).sqrt()])
}

/// Scripted chat with embeddings looked up by exact text, recording every
/// exchange it serves.
pub struct ScriptedModel {
    chat: Gateway,
    vectors: HashMap<String, EmbeddingVector>,
    pub exchanges: Mutex<Vec<(Role, ChatExchange)>>,
}

impl ScriptedModel {
    pub fn new(entries: Vec<TapeEntry>) -> Self {
        ScriptedModel {
            chat: mock(entries),
            vectors: HashMap::new(),
            exchanges: Mutex::new(Vec::new()),
        }
    }

    pub fn with_vector(mut self, text: &str, v: EmbeddingVector) -> Self {
        self.vectors.insert(text.to_string(), v);
        self
    }

    pub fn exchanges(&self) -> Vec<(Role, ChatExchange)> {
        self.exchanges.lock().unwrap().clone()
    }
}

impl LanguageModel for ScriptedModel {
    fn chat(&self, role: Role, scope: Option<&str>, exchange: &ChatExchange) -> Result<String, GatewayError> {
        self.exchanges.lock().unwrap().push((role, exchange.clone()));
        self.chat.chat(role, scope, exchange)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        match self.vectors.get(text) {
            Some(v) => Ok(v.clone()),
            None => self.chat.embed(text),
        }
    }
}

pub fn explorer_reply(query: &str) -> String {
    serde_json::json!({"User Query": query, "Parameters": {}}).to_string()
}

/// Explorer, Analyzer and Rewriter replies for one iteration of `tool`.
pub fn iteration(tool: &str, query: &str, suggestion: &str, rewrite: &str) -> Vec<TapeEntry> {
    vec![
        TapeEntry::new(Role::Explorer, explorer_reply(query)).for_tool(tool),
        TapeEntry::new(Role::Analyzer, serde_json::json!({ "Suggestions": suggestion }).to_string()).for_tool(tool),
        TapeEntry::new(
            Role::Rewriter,
            serde_json::json!({"Rewritten description": rewrite, "Suggestions for exploring": format!("after {query}")})
                .to_string(),
        )
        .for_tool(tool),
    ]
}

/// A parameterless tool whose rendering is dominated by its description.
pub fn bare_tool(name: &str, description: &str) -> ToolDocumentation {
    serde_json::from_value(serde_json::json!({
        "name": name,
        "description": description,
        "method": "GET",
        "url": format!("/{name}"),
        "parameters": [],
    }))
    .unwrap()
}

/// Descriptions with pairwise disjoint vocabularies.
pub const DISJOINT: [&str; 5] = [
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet",
    "kilo lima mike november oscar papa quebec romeo sierra tango",
    "uniform victor whiskey xray yankee zulu apple banana cherry grape",
    "lemon mango nectarine olive peach quince raspberry strawberry tomato ugli",
    "violet wheat yam zucchini acorn birch cedar dogwood elm fir",
];

/// Queries with pairwise disjoint vocabularies.
pub const QUERIES: [&str; 5] = [
    "first probe one",
    "second sample two",
    "third trial three",
    "fourth test four",
    "fifth check five",
];

pub fn sandbox_for(tools: &[&str]) -> SandboxRegistry {
    let mut registry = SandboxRegistry::new(DEFAULT_TRUNCATION_CHARS);
    for tool in tools {
        registry.add(
            serde_json::from_value(serde_json::json!({
                "tool": tool,
                "entries": [{"url_pattern": format!("/{tool}"), "response_status": 200, "response_body": "{\"ok\": true}"}],
            }))
            .unwrap(),
        );
    }
    registry
}

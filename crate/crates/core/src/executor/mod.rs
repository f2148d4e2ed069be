//! Running exploration instances against tools.
//!
//! Tool-side failures (missing parameters, non-2xx replies, network errors)
//! come back as a [`ToolResponse`] so the Analyzer can learn from them.
//! [`ExecutorError`] is reserved for misconfiguration.

mod http;
mod sandbox;

use std::collections::BTreeMap;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{literal_text, ExplorationInstance, HttpMethod, ResponseStatus, ToolDocumentation, ToolResponse};

pub use http::HttpExecutor;
pub use sandbox::{load_sandbox, BindingMatcher, FixtureFile, SandboxFixture, SandboxRegistry};

pub const DEFAULT_TRUNCATION_CHARS: usize = 8192;

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("cannot read fixtures at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture file {file}{}: {message}", entry.map(|i| format!(", entry {i}")).unwrap_or_default())]
    Fixture {
        file: String,
        entry: Option<usize>,
        message: String,
    },
    #[error("invalid request for tool {tool}: {message}")]
    Request { tool: String, message: String },
}

pub trait ToolExecutor: Send + Sync {
    fn execute(&self, instance: &ExplorationInstance, doc: &ToolDocumentation) -> Result<ToolResponse, ExecutorError>;

    fn describe(&self) -> String;
}

/// Concrete request derived from a documentation version and bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRequest {
    pub method: HttpMethod,
    /// URL template with path placeholders substituted (percent-encoded).
    pub path: String,
    /// Leftover bindings for GET and DELETE.
    pub query: Vec<(String, String)>,
    /// Leftover bindings for POST, PUT and PATCH.
    pub body: Option<Map<String, Value>>,
}

const PATH_SEGMENT: &percent_encoding::AsciiSet = &percent_encoding::NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'~');

/// The tool-error reply for the first required parameter without a binding
/// (or documentation default), if any.
pub fn missing_required(instance: &ExplorationInstance, doc: &ToolDocumentation) -> Option<ToolResponse> {
    doc.parameters
        .iter()
        .find(|p| p.required && p.default.is_none() && !instance.bindings.contains_key(&p.name))
        .map(|p| {
            ToolResponse::failure(
                ResponseStatus::ToolError,
                format!("Missing required parameter '{}' for tool {}.", p.name, doc.name),
            )
        })
}

/// Bindings plus documentation defaults for unbound parameters.
fn effective_bindings(instance: &ExplorationInstance, doc: &ToolDocumentation) -> BTreeMap<String, Value> {
    let mut out = instance.bindings.clone();
    for p in &doc.parameters {
        if let Some(d) = &p.default {
            out.entry(p.name.clone()).or_insert_with(|| d.clone());
        }
    }
    out
}

pub fn build_request(instance: &ExplorationInstance, doc: &ToolDocumentation) -> PreparedRequest {
    let mut bindings = effective_bindings(instance, doc);
    let mut path = doc.url_template.clone();
    for name in crate::model::url_placeholders(&doc.url_template) {
        if let Some(v) = bindings.remove(&name) {
            let encoded = percent_encoding::utf8_percent_encode(&literal_text(&v), PATH_SEGMENT).to_string();
            path = path.replace(&format!("{{{name}}}"), &encoded);
        }
    }
    let (query, body) = match doc.method {
        HttpMethod::Get | HttpMethod::Delete => {
            (bindings.into_iter().map(|(k, v)| (k, literal_text(&v))).collect(), None)
        }
        _ => (Vec::new(), Some(bindings.into_iter().collect())),
    };
    PreparedRequest {
        method: doc.method,
        path,
        query,
        body,
    }
}

/// Cuts `body` to at most `cap` characters on a character boundary.
pub fn truncate_body(body: String, cap: usize) -> (String, bool) {
    match body.char_indices().nth(cap) {
        Some((byte_idx, _)) => {
            let mut body = body;
            body.truncate(byte_idx);
            (body, true)
        }
        None => (body, false),
    }
}

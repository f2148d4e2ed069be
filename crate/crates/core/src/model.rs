//! Domain types for tool documentation, exploration records and refinement
//! trajectories.
//!
//! Everything here is a plain value type. Trajectories only grow through
//! [`RefinementTrajectory::append_record`], which enforces contiguity and the
//! `doc_after -> doc_before` chain between consecutive iterations.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("documentation set is not a JSON array of tool records: {0}")]
    NotAnArray(String),
    #[error("tool {tool}: {message}")]
    Schema { tool: String, message: String },
    #[error("duplicate tool name `{0}`")]
    DuplicateName(String),
    #[error("record iteration {got} does not follow trajectory length {len}")]
    NonContiguous { len: usize, got: u32 },
    #[error("iteration {iteration}: doc_before does not match the previous doc_after")]
    ChainBreak { iteration: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Delete,
    Patch,
}

impl HttpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Delete => "DELETE",
            HttpMethod::Patch => "PATCH",
        }
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
        }
    }
}

/// One declared parameter of a tool.
///
/// A `default` on a required parameter is a documentation default: the
/// Explorer is told to use it when it cannot know a valid value (IDs,
/// usernames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ParamKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

/// The artifact being refined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDocumentation {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub method: HttpMethod,
    #[serde(rename = "url")]
    pub url_template: String,
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
    #[serde(default)]
    pub version: u32,
}

impl ToolDocumentation {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Canonical text form used by prompts and by every text metric.
    ///
    /// Lines, in order: name, description (empty line when the description
    /// is empty), `METHOD url`, then one `name (kind, required|optional):
    /// description` line per parameter, with ` [default: v]` appended when a
    /// default exists.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.name);
        out.push('\n');
        out.push_str(&self.description);
        out.push('\n');
        out.push_str(self.method.as_str());
        out.push(' ');
        out.push_str(&self.url_template);
        for p in &self.parameters {
            out.push('\n');
            out.push_str(&p.name);
            out.push_str(" (");
            out.push_str(p.kind.as_str());
            out.push_str(if p.required { ", required): " } else { ", optional): " });
            out.push_str(&p.description);
            if let Some(d) = &p.default {
                out.push_str(" [default: ");
                out.push_str(&literal_text(d));
                out.push(']');
            }
        }
        out
    }

    /// Same tool with a new description and the next version number.
    pub fn with_description(&self, description: impl Into<String>) -> ToolDocumentation {
        ToolDocumentation {
            description: description.into(),
            version: self.version + 1,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let schema = |message: String| ModelError::Schema {
            tool: self.name.clone(),
            message,
        };
        if self.name.trim().is_empty() {
            return Err(schema("field `name` must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for p in &self.parameters {
            if p.name.trim().is_empty() {
                return Err(schema("field `parameters[].name` must be non-empty".into()));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(schema(format!("duplicate parameter `{}`", p.name)));
            }
        }
        for placeholder in url_placeholders(&self.url_template) {
            if self.parameter(&placeholder).is_none() {
                return Err(schema(format!(
                    "field `url` placeholder `{{{placeholder}}}` names no declared parameter"
                )));
            }
        }
        Ok(())
    }
}

/// Names of the `{param}` placeholders of a URL template, in order.
pub fn url_placeholders(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push(after[..close].to_string());
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Text form of a JSON literal: strings unquoted, everything else as JSON.
pub fn literal_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a documentation set file (a JSON array of tool records).
pub fn parse_documentation_set(bytes: &[u8]) -> Result<Vec<ToolDocumentation>, ModelError> {
    let raw: Value = serde_json::from_slice(bytes).map_err(|e| ModelError::NotAnArray(e.to_string()))?;
    let Value::Array(items) = raw else {
        return Err(ModelError::NotAnArray("top-level value is not an array".into()));
    };
    let mut docs = Vec::with_capacity(items.len());
    let mut names = HashSet::new();
    for (idx, item) in items.into_iter().enumerate() {
        let label = item
            .get("name")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{idx}"));
        let doc: ToolDocumentation = serde_json::from_value(item).map_err(|e| ModelError::Schema {
            tool: label.clone(),
            message: e.to_string(),
        })?;
        doc.validate()?;
        if !names.insert(doc.name.clone()) {
            return Err(ModelError::DuplicateName(doc.name));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn serialize_documentation_set(docs: &[ToolDocumentation]) -> String {
    serde_json::to_string_pretty(docs).expect("documentation serializes")
}

/// Rejects sets with repeated tool names.
pub fn ensure_unique_names(docs: &[ToolDocumentation]) -> Result<(), ModelError> {
    let mut names = HashSet::new();
    for d in docs {
        if !names.insert(d.name.as_str()) {
            return Err(ModelError::DuplicateName(d.name.clone()));
        }
    }
    Ok(())
}

/// Explorer output: a user query plus concrete parameter bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationInstance {
    pub query: String,
    pub bindings: BTreeMap<String, Value>,
    pub iteration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    ToolError,
    TransportError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub status: ResponseStatus,
    pub http_status: Option<u16>,
    pub body: String,
    pub truncated: bool,
    pub latency_ms: u64,
}

impl ToolResponse {
    pub fn from_http(http_status: u16, body: String, truncated: bool, latency_ms: u64) -> Self {
        let status = if (200..300).contains(&http_status) {
            ResponseStatus::Ok
        } else {
            ResponseStatus::ToolError
        };
        ToolResponse {
            status,
            http_status: Some(http_status),
            body,
            truncated,
            latency_ms,
        }
    }

    pub fn failure(status: ResponseStatus, body: impl Into<String>) -> Self {
        ToolResponse {
            status,
            http_status: None,
            body: body.into(),
            truncated: false,
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionSuggestion {
    pub text: String,
    pub iteration: u32,
}

/// Where the Explorer should look next. Iteration 0 carries the empty seed
/// direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationDirection {
    pub text: String,
    pub iteration: u32,
}

impl ExplorationDirection {
    pub fn seed() -> Self {
        ExplorationDirection {
            text: String::new(),
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedQuery {
    pub query: String,
    pub max_similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    DeltaThreshold,
    MaxIterations,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::DeltaThreshold => "delta_threshold",
            TerminationReason::MaxIterations => "max_iterations",
        })
    }
}

/// One full explore / analyze / rewrite round. This is also the line schema
/// of `trajectory.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub instance: ExplorationInstance,
    pub response: ToolResponse,
    pub suggestion: RevisionSuggestion,
    pub direction: ExplorationDirection,
    pub doc_before: ToolDocumentation,
    pub doc_after: ToolDocumentation,
    pub delta: Option<f64>,
    #[serde(default)]
    pub rejected_queries: Vec<RejectedQuery>,
    /// The diversity gate ran out of reflection retries and kept the least
    /// similar attempt.
    #[serde(default)]
    pub gate_forced: bool,
    /// The Rewriter reply had no "Suggestions for exploring" key.
    #[serde(default)]
    pub direction_defaulted: bool,
    /// Set on the record that ended the loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<TerminationReason>,
}

/// Revision and exploration history of one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrajectory {
    pub tool_name: String,
    pub initial: ToolDocumentation,
    pub records: Vec<IterationRecord>,
    pub terminated_reason: Option<TerminationReason>,
}

impl RefinementTrajectory {
    pub fn new(initial: ToolDocumentation) -> Self {
        RefinementTrajectory {
            tool_name: initial.name.clone(),
            initial,
            records: Vec::new(),
            terminated_reason: None,
        }
    }

    /// Current tail document: the last `doc_after`, or `t_0` when empty.
    pub fn current_doc(&self) -> &ToolDocumentation {
        self.records.last().map(|r| &r.doc_after).unwrap_or(&self.initial)
    }

    pub fn append_record(mut self, record: IterationRecord) -> Result<Self, ModelError> {
        let expected = self.records.len() as u32 + 1;
        if record.iteration != expected {
            return Err(ModelError::NonContiguous {
                len: self.records.len(),
                got: record.iteration,
            });
        }
        if &record.doc_before != self.current_doc() {
            return Err(ModelError::ChainBreak {
                iteration: record.iteration,
            });
        }
        if let Some(reason) = record.termination {
            self.terminated_reason = Some(reason);
        }
        self.records.push(record);
        Ok(self)
    }
}

/// Checks contiguity and chaining of records read back from disk, where the
/// initial document is whatever the first record started from.
pub fn validate_records(records: &[IterationRecord]) -> Result<(), ModelError> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    let mut trajectory = RefinementTrajectory::new(first.doc_before.clone());
    for r in records {
        trajectory = trajectory.append_record(r.clone())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub max_iterations: u32,
    pub phi: f64,
    pub tau: f64,
    pub reflection_retries: u32,
    /// Re-prompts allowed per agent call when the reply cannot be parsed.
    pub parse_retries: u32,
    pub response_truncation_chars: usize,
    pub backend: BackendKind,
    pub parallelism: usize,
    pub seed: u64,
    pub http_timeout_secs: u64,
    pub chat_model: String,
    pub embedding_model: String,
    /// Requests per second allowed through the gateway; 0 disables limiting.
    pub requests_per_second: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            max_iterations: 5,
            phi: 0.9,
            tau: 0.75,
            reflection_retries: 3,
            parse_retries: 1,
            response_truncation_chars: 8192,
            backend: BackendKind::Mock,
            parallelism: 1,
            seed: 0,
            http_timeout_secs: 15,
            chat_model: "gpt-4o".into(),
            embedding_model: "text-embedding-ada-002".into(),
            requests_per_second: 0.0,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.max_iterations == 0 {
            return err("max_iterations must be a positive integer");
        }
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return err("phi (similarity threshold) must lie in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return err("tau (termination threshold) must lie in (0, 1]");
        }
        if self.response_truncation_chars == 0 {
            return err("response_truncation_chars must be positive");
        }
        if self.parallelism == 0 {
            return err("parallelism must be a positive integer");
        }
        if self.requests_per_second.is_nan() || self.requests_per_second < 0.0 {
            return err("requests_per_second must be non-negative");
        }
        Ok(())
    }
}

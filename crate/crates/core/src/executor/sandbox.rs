//! Fixture-driven stand-in for live tool endpoints.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{missing_required, truncate_body, ExecutorError, ToolExecutor};
use crate::model::{literal_text, ExplorationInstance, ResponseStatus, ToolDocumentation, ToolResponse};

/// How one binding is matched. JSON forms: `"any"`, `{"exact": <literal>}`,
/// `{"glob": "pattern"}` with `*` and `?` wildcards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingMatcher {
    /// Matches any value, including an absent binding.
    Any,
    Exact(Value),
    Glob(String),
}

impl BindingMatcher {
    fn matches(&self, value: Option<&Value>) -> bool {
        match (self, value) {
            (BindingMatcher::Any, _) => true,
            (_, None) => false,
            (BindingMatcher::Exact(want), Some(v)) => literal_text(want) == literal_text(v),
            (BindingMatcher::Glob(pattern), Some(v)) => glob_match(pattern, &literal_text(v)),
        }
    }
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    // reachable[j]: pattern prefix consumed so far matches t[..j]
    let mut reachable = vec![false; t.len() + 1];
    reachable[0] = true;
    for &pc in &p {
        let mut next = vec![false; t.len() + 1];
        match pc {
            '*' => {
                let mut seen = false;
                for j in 0..=t.len() {
                    seen |= reachable[j];
                    next[j] = seen;
                }
            }
            _ => {
                for j in 0..t.len() {
                    if reachable[j] && (pc == '?' || pc == t[j]) {
                        next[j + 1] = true;
                    }
                }
            }
        }
        reachable = next;
    }
    reachable[t.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxFixture {
    /// Compared with the documentation's URL template, which may carry a
    /// scheme and host in front of it.
    pub url_pattern: String,
    #[serde(default)]
    pub binding_matchers: BTreeMap<String, BindingMatcher>,
    pub response_status: u16,
    pub response_body: String,
}

impl SandboxFixture {
    fn matches(&self, instance: &ExplorationInstance, doc: &ToolDocumentation) -> bool {
        (doc.url_template == self.url_pattern || doc.url_template.ends_with(&self.url_pattern))
            && self
                .binding_matchers
                .iter()
                .all(|(name, m)| m.matches(instance.bindings.get(name)))
    }

    fn is_catch_all(&self) -> bool {
        self.binding_matchers.values().all(|m| *m == BindingMatcher::Any)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    pub tool: String,
    pub entries: Vec<SandboxFixture>,
}

/// Immutable after load; first matching fixture wins.
#[derive(Debug, Clone, Default)]
pub struct SandboxRegistry {
    tools: HashMap<String, Vec<SandboxFixture>>,
    truncation_chars: usize,
}

impl SandboxRegistry {
    pub fn new(truncation_chars: usize) -> Self {
        SandboxRegistry {
            tools: HashMap::new(),
            truncation_chars,
        }
    }

    pub fn with_truncation(mut self, chars: usize) -> Self {
        self.truncation_chars = chars;
        self
    }

    pub fn add(&mut self, file: FixtureFile) {
        self.tools.entry(file.tool).or_default().extend(file.entries);
    }

    pub fn fixtures(&self, tool: &str) -> &[SandboxFixture] {
        self.tools.get(tool).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tool_count(&self) -> usize {
        self.tools.len()
    }

    /// Tools without a catch-all entry.
    pub fn lint(&self) -> Vec<String> {
        let mut warnings: Vec<String> = self
            .tools
            .iter()
            .filter(|(_, entries)| !entries.iter().any(SandboxFixture::is_catch_all))
            .map(|(tool, _)| format!("tool {tool} has no catch-all fixture"))
            .collect();
        warnings.sort();
        warnings
    }
}

impl ToolExecutor for SandboxRegistry {
    fn execute(&self, instance: &ExplorationInstance, doc: &ToolDocumentation) -> Result<ToolResponse, ExecutorError> {
        if let Some(resp) = missing_required(instance, doc) {
            return Ok(resp);
        }
        let Some(fixture) = self.fixtures(&doc.name).iter().find(|f| f.matches(instance, doc)) else {
            return Ok(ToolResponse::failure(
                ResponseStatus::TransportError,
                format!("no fixture matched tool {} at {}", doc.name, doc.url_template),
            ));
        };
        let (body, truncated) = truncate_body(fixture.response_body.clone(), self.truncation_chars);
        Ok(ToolResponse::from_http(fixture.response_status, body, truncated, 0))
    }

    fn describe(&self) -> String {
        format!("sandbox(tools={})", self.tools.len())
    }
}

/// Loads every `*.json` fixture file of `dir` in file-name order.
pub fn load_sandbox(dir: &Path, truncation_chars: usize) -> Result<SandboxRegistry, ExecutorError> {
    let io_err = |source| ExecutorError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(io_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();

    let mut registry = SandboxRegistry::new(truncation_chars);
    for path in files {
        let name = path.display().to_string();
        let bytes = fs::read(&path).map_err(|source| ExecutorError::Io {
            path: name.clone(),
            source,
        })?;
        registry.add(parse_fixture_file(&name, &bytes)?);
    }
    Ok(registry)
}

fn parse_fixture_file(name: &str, bytes: &[u8]) -> Result<FixtureFile, ExecutorError> {
    let err = |entry, message: String| ExecutorError::Fixture {
        file: name.to_string(),
        entry,
        message,
    };
    let raw: Value = serde_json::from_slice(bytes).map_err(|e| err(None, e.to_string()))?;
    let tool = raw
        .get("tool")
        .and_then(Value::as_str)
        .ok_or_else(|| err(None, "missing string field `tool`".into()))?
        .to_string();
    let items = raw
        .get("entries")
        .and_then(Value::as_array)
        .ok_or_else(|| err(None, "missing array field `entries`".into()))?;
    let entries = items
        .iter()
        .enumerate()
        .map(|(i, item)| serde_json::from_value(item.clone()).map_err(|e| err(Some(i), e.to_string())))
        .collect::<Result<Vec<SandboxFixture>, _>>()?;
    Ok(FixtureFile { tool, entries })
}

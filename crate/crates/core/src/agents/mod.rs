//! Explorer, Analyzer and Rewriter: prompt construction plus strict reply
//! parsing over a [`LanguageModel`].

mod parse;
pub mod prompts;

use std::cell::Cell;

use serde_json::Value;
use thiserror::Error;

use crate::gateway::{ChatExchange, GatewayError, LanguageModel, Role};
use crate::metrics::{max_history_similarity, EmbeddingVector, MetricError};
use crate::model::{
    ExplorationDirection, ExplorationInstance, RejectedQuery, RevisionSuggestion, ToolDocumentation, ToolResponse,
};

pub use parse::{parse_agent_reply, KeyKind, ReplyParseError};
pub use prompts::{has_unfilled_marker, PromptTemplates, Slots, Template, TemplateError};

const RETRY_NOTE: &str = "Reply with only the JSON object.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{role} reply rejected: {message}")]
    Output { role: Role, message: String, raw: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Rewriter result for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Rewrite {
    pub doc: ToolDocumentation,
    pub direction: ExplorationDirection,
    /// The reply had no "Suggestions for exploring" key.
    pub direction_defaulted: bool,
}

/// Evidence passed back to the Explorer after a rejected query.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub rejected_query: String,
    pub similarity: f64,
    pub phi: f64,
}

impl Reflection {
    pub fn addendum(&self) -> String {
        format!(
            "Your previous query was too similar to a query you already explored (cosine similarity {:.3}, limit {}); analyze why it overlaps and explore a different aspect of the API. Rejected query: \"{}\"",
            self.similarity, self.phi, self.rejected_query
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub instance: ExplorationInstance,
    pub embedding: EmbeddingVector,
    pub max_similarity: f64,
    pub rejected: Vec<RejectedQuery>,
    pub forced: bool,
}

/// Enforces the query diversity constraint.
///
/// Accepts `candidate` when its largest cosine similarity to the accepted
/// query embeddings is below `phi`. Otherwise asks `regenerate` for a new
/// candidate, at most `reflection_retries` times. If every attempt fails the
/// constraint, the least similar attempt is accepted with `forced` set.
pub fn diversity_gate<F>(
    candidate: ExplorationInstance,
    accepted: &[EmbeddingVector],
    phi: f64,
    reflection_retries: u32,
    embedder: &dyn LanguageModel,
    mut regenerate: F,
) -> Result<GateOutcome, AgentError>
where
    F: FnMut(&Reflection) -> Result<ExplorationInstance, AgentError>,
{
    let mut tried: Vec<(ExplorationInstance, EmbeddingVector, f64)> = Vec::new();
    let mut current = candidate;
    for attempt in 0..=reflection_retries {
        let embedding = embedder.embed(&current.query)?;
        let sim = max_history_similarity(&embedding, accepted)?;
        if sim < phi {
            return Ok(GateOutcome {
                instance: current,
                embedding,
                max_similarity: sim,
                rejected: tried
                    .into_iter()
                    .map(|(i, _, s)| RejectedQuery {
                        query: i.query,
                        max_similarity: s,
                    })
                    .collect(),
                forced: false,
            });
        }
        let reflection = Reflection {
            rejected_query: current.query.clone(),
            similarity: sim,
            phi,
        };
        tried.push((current.clone(), embedding, sim));
        if attempt == reflection_retries {
            break;
        }
        current = regenerate(&reflection)?;
    }
    let best = tried
        .iter()
        .enumerate()
        .fold(0, |best, (i, t)| if t.2 < tried[best].2 { i } else { best });
    let (instance, embedding, max_similarity) = tried.remove(best);
    Ok(GateOutcome {
        instance,
        embedding,
        max_similarity,
        rejected: tried
            .into_iter()
            .map(|(i, _, s)| RejectedQuery {
                query: i.query,
                max_similarity: s,
            })
            .collect(),
        forced: true,
    })
}

/// Renders one explored example the way the Analyzer and Rewriter see it.
pub fn render_example(instance: &ExplorationInstance, response: &ToolResponse, doc: &ToolDocumentation) -> String {
    let params = serde_json::to_string(&instance.bindings).expect("bindings serialize");
    let api_response = match serde_json::from_str::<Value>(&response.body) {
        Ok(_) => response.body.clone(),
        Err(_) => Value::String(response.body.clone()).to_string(),
    };
    format!(
        "{{\"User Query\": {}, \"url\": {}, \"Parameters\": {}, \"API_Response\": {}}}",
        Value::String(instance.query.clone()),
        Value::String(doc.url_template.clone()),
        params,
        api_response
    )
}

fn render_examples(examples: &[(ExplorationInstance, ToolResponse)], doc: &ToolDocumentation) -> String {
    examples
        .iter()
        .map(|(i, r)| render_example(i, r, doc))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_history(history: &[ToolDocumentation]) -> String {
    history
        .iter()
        .map(|d| format!("Version {}:\n{}", d.version, d.render()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// The three role agents for one tool. Stateless apart from a call counter;
/// all history is passed in.
pub struct Agents<'a> {
    llm: &'a dyn LanguageModel,
    templates: &'a PromptTemplates,
    scope: Option<&'a str>,
    parse_retries: u32,
    calls: Cell<u64>,
}

impl<'a> Agents<'a> {
    pub fn new(llm: &'a dyn LanguageModel, templates: &'a PromptTemplates, parse_retries: u32) -> Self {
        Agents {
            llm,
            templates,
            scope: None,
            parse_retries,
            calls: Cell::new(0),
        }
    }

    /// Namespaces chat calls by tool name.
    pub fn scoped(mut self, tool: &'a str) -> Self {
        self.scope = Some(tool);
        self
    }

    pub fn llm(&self) -> &'a dyn LanguageModel {
        self.llm
    }

    /// Chat calls issued so far.
    pub fn calls(&self) -> u64 {
        self.calls.get()
    }

    /// Sends the prompt and re-prompts (up to the parse budget) while
    /// `interpret` rejects the reply.
    fn ask<T>(
        &self,
        role: Role,
        template: &Template,
        slots: &Slots,
        mut interpret: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, AgentError> {
        let (system, user) = template.render(slots)?;
        let mut last = (String::new(), String::new());
        for attempt in 0..=self.parse_retries {
            let user_text = if attempt == 0 {
                user.clone()
            } else {
                format!("{user}\n\n{} {RETRY_NOTE}", last.0)
            };
            let exchange = ChatExchange::new(role, system.clone(), user_text);
            self.calls.set(self.calls.get() + 1);
            let reply = self.llm.chat(role, self.scope, &exchange)?;
            match interpret(&reply) {
                Ok(v) => return Ok(v),
                Err(message) => last = (message, reply),
            }
        }
        Err(AgentError::Output {
            role,
            message: last.0,
            raw: last.1,
        })
    }

    /// Builds the experience-gathering prompt and parses
    /// `{"User Query": ..., "Parameters": {...}}`.
    pub fn explorer_generate(
        &self,
        doc: &ToolDocumentation,
        direction: &ExplorationDirection,
        explored_queries: &[String],
        iteration: u32,
        reflection: Option<&Reflection>,
    ) -> Result<ExplorationInstance, AgentError> {
        let mut slots = Slots::new();
        slots.insert("tool_documentation", doc.render());
        slots.insert(
            "explored_queries",
            explored_queries
                .iter()
                .enumerate()
                .map(|(i, q)| format!("{}. {}", i + 1, q))
                .collect::<Vec<_>>()
                .join("\n"),
        );
        slots.insert("suggestions", direction.text.clone());
        slots.insert("reflection", reflection.map(Reflection::addendum).unwrap_or_default());

        self.ask(Role::Explorer, &self.templates.explorer, &slots, |raw| {
            let map = parse_agent_reply(raw, &[("User Query", KeyKind::String), ("Parameters", KeyKind::Object)])
                .map_err(|e| format!("Your previous reply could not be used: {}.", e.message))?;
            let query = map["User Query"].as_str().unwrap_or_default().trim().to_string();
            if query.is_empty() {
                return Err("Your previous reply had an empty \"User Query\".".into());
            }
            let bindings = map["Parameters"].as_object().cloned().unwrap_or_default();
            let undeclared: Vec<&str> = bindings
                .keys()
                .filter(|k| doc.parameter(k).is_none())
                .map(String::as_str)
                .collect();
            if !undeclared.is_empty() {
                return Err(format!(
                    "Your previous reply used parameters the API does not declare: {}.",
                    undeclared.join(", ")
                ));
            }
            Ok(ExplorationInstance {
                query,
                bindings: bindings.into_iter().collect(),
                iteration,
            })
        })
    }

    /// Learning-from-experience step: `{"Suggestions": ...}`.
    pub fn analyzer_suggest(
        &self,
        doc: &ToolDocumentation,
        examples: &[(ExplorationInstance, ToolResponse)],
        doc_history: &[ToolDocumentation],
        iteration: u32,
    ) -> Result<RevisionSuggestion, AgentError> {
        let mut slots = Slots::new();
        slots.insert("tool_documentation", doc.render());
        slots.insert("explored_examples", render_examples(examples, doc));
        slots.insert("history", render_history(doc_history));
        self.ask(Role::Analyzer, &self.templates.analyzer, &slots, |raw| {
            let map = parse_agent_reply(raw, &[("Suggestions", KeyKind::String)])
                .map_err(|e| format!("Your previous reply could not be used: {}.", e.message))?;
            Ok(RevisionSuggestion {
                text: map["Suggestions"].as_str().unwrap_or_default().to_string(),
                iteration,
            })
        })
    }

    /// Documentation rewriting step. Only the description changes; the
    /// version is bumped even when the text is identical.
    pub fn rewriter_rewrite(
        &self,
        doc: &ToolDocumentation,
        examples: &[(ExplorationInstance, ToolResponse)],
        suggestion: &RevisionSuggestion,
        doc_history: &[ToolDocumentation],
        iteration: u32,
    ) -> Result<Rewrite, AgentError> {
        let mut slots = Slots::new();
        slots.insert("tool_documentation", doc.render());
        slots.insert("explored_examples", render_examples(examples, doc));
        slots.insert("suggestions", suggestion.text.clone());
        slots.insert("history", render_history(doc_history));
        self.ask(Role::Rewriter, &self.templates.rewriter, &slots, |raw| {
            let map = parse_agent_reply(raw, &[("Rewritten description", KeyKind::String)])
                .map_err(|e| format!("Your previous reply could not be used: {}.", e.message))?;
            let description = map["Rewritten description"].as_str().unwrap_or_default().trim();
            if description.is_empty() {
                return Err("Your previous reply had an empty \"Rewritten description\".".into());
            }
            let (direction, defaulted) = match map.get("Suggestions for exploring") {
                None => (String::new(), true),
                Some(Value::String(s)) => (s.clone(), false),
                Some(_) => return Err("\"Suggestions for exploring\" must be a string.".into()),
            };
            Ok(Rewrite {
                doc: doc.with_description(description),
                direction: ExplorationDirection {
                    text: direction,
                    iteration,
                },
                direction_defaulted: defaulted,
            })
        })
    }
}

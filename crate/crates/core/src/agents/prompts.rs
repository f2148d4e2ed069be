//! Prompt templates with `{{slot}}` markers.
//!
//! A template file has a `[system]` part and a `[user]` part. Besides plain
//! slots, `{{#name}}...{{/name}}` wraps text that is emitted only when the
//! slot `name` is non-empty.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::gateway::Role;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template {name}: {message}")]
    Syntax { name: String, message: String },
    #[error("template {name}: slot `{slot}` has no value")]
    UnfilledSlot { name: String, slot: String },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Text(String),
    Slot(String),
    Section(String, Vec<Node>),
}

/// A parsed `[system]`/`[user]` template.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    system: Vec<Node>,
    user: Vec<Node>,
}

pub type Slots = BTreeMap<&'static str, String>;

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, TemplateError> {
        let syntax = |message: &str| TemplateError::Syntax {
            name: name.to_string(),
            message: message.to_string(),
        };
        let body = source
            .strip_prefix("[system]\n")
            .ok_or_else(|| syntax("must start with a `[system]` line"))?;
        let (system, user) = body
            .split_once("\n[user]\n")
            .ok_or_else(|| syntax("missing `[user]` line"))?;
        let user = user.strip_suffix('\n').unwrap_or(user);
        Ok(Template {
            name: name.to_string(),
            system: parse_nodes(system).map_err(|m| syntax(&m))?,
            user: parse_nodes(user).map_err(|m| syntax(&m))?,
        })
    }

    /// Renders `(system, user)`.
    pub fn render(&self, slots: &Slots) -> Result<(String, String), TemplateError> {
        let mut system = String::new();
        let mut user = String::new();
        self.render_nodes(&self.system, slots, &mut system)?;
        self.render_nodes(&self.user, slots, &mut user)?;
        Ok((system, user))
    }

    fn lookup<'s>(&self, slots: &'s Slots, slot: &str) -> Result<&'s String, TemplateError> {
        slots.get(slot).ok_or_else(|| TemplateError::UnfilledSlot {
            name: self.name.clone(),
            slot: slot.to_string(),
        })
    }

    fn render_nodes(&self, nodes: &[Node], slots: &Slots, out: &mut String) -> Result<(), TemplateError> {
        for node in nodes {
            match node {
                Node::Text(t) => out.push_str(t),
                Node::Slot(s) => out.push_str(self.lookup(slots, s)?),
                Node::Section(s, inner) => {
                    if !self.lookup(slots, s)?.is_empty() {
                        self.render_nodes(inner, slots, out)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn parse_nodes(src: &str) -> Result<Vec<Node>, String> {
    // Stack of open sections: (name, nodes collected so far).
    let mut stack: Vec<(String, Vec<Node>)> = vec![(String::new(), Vec::new())];
    let mut rest = src;
    while let Some(open) = rest.find("{{") {
        if open > 0 {
            stack.last_mut().unwrap().1.push(Node::Text(rest[..open].to_string()));
        }
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or("unterminated `{{` marker")?;
        let tag = after[..close].trim();
        rest = &after[close + 2..];
        if let Some(name) = tag.strip_prefix('#') {
            check_ident(name)?;
            stack.push((name.to_string(), Vec::new()));
        } else if let Some(name) = tag.strip_prefix('/') {
            let (open_name, nodes) = stack.pop().filter(|_| !stack.is_empty()).ok_or("stray section close")?;
            if open_name != name || stack.is_empty() {
                return Err(format!("section `{open_name}` closed by `{name}`"));
            }
            stack.last_mut().unwrap().1.push(Node::Section(open_name, nodes));
        } else {
            check_ident(tag)?;
            stack.last_mut().unwrap().1.push(Node::Slot(tag.to_string()));
        }
    }
    if !rest.is_empty() {
        stack.last_mut().unwrap().1.push(Node::Text(rest.to_string()));
    }
    if stack.len() != 1 {
        return Err(format!("section `{}` is never closed", stack.last().unwrap().0));
    }
    Ok(stack.pop().unwrap().1)
}

fn check_ident(name: &str) -> Result<(), String> {
    if !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
        Ok(())
    } else {
        Err(format!("bad slot name `{name}`"))
    }
}

/// True when `text` still contains a `{{marker}}` of this template dialect.
pub fn has_unfilled_marker(text: &str) -> bool {
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        if let Some(close) = after.find("}}") {
            let tag = after[..close].trim_start_matches(['#', '/']);
            if check_ident(tag).is_ok() {
                return true;
            }
        }
        rest = after;
    }
    false
}

/// One template per role.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub explorer: Template,
    pub analyzer: Template,
    pub rewriter: Template,
    pub judge: Template,
    pub runner: Template,
}

const BUILTIN: [(Role, &str); 5] = [
    (Role::Explorer, include_str!("../templates/explorer.txt")),
    (Role::Analyzer, include_str!("../templates/analyzer.txt")),
    (Role::Rewriter, include_str!("../templates/rewriter.txt")),
    (Role::Judge, include_str!("../templates/judge.txt")),
    (Role::Runner, include_str!("../templates/runner.txt")),
];

impl PromptTemplates {
    pub fn builtin() -> Self {
        let get = |role: Role| {
            let src = BUILTIN.iter().find(|(r, _)| *r == role).unwrap().1;
            Template::parse(&role.to_string(), src).expect("built-in template parses")
        };
        PromptTemplates {
            explorer: get(Role::Explorer),
            analyzer: get(Role::Analyzer),
            rewriter: get(Role::Rewriter),
            judge: get(Role::Judge),
            runner: get(Role::Runner),
        }
    }

    /// Built-ins, overridden by any `<role>.txt` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = PromptTemplates::builtin();
        for role in [
            Role::Explorer,
            Role::Analyzer,
            Role::Rewriter,
            Role::Judge,
            Role::Runner,
        ] {
            let path = dir.join(format!("{role}.txt"));
            if !path.exists() {
                continue;
            }
            let src = fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let parsed = Template::parse(&role.to_string(), &src)?;
            match role {
                Role::Explorer => t.explorer = parsed,
                Role::Analyzer => t.analyzer = parsed,
                Role::Rewriter => t.rewriter = parsed,
                Role::Judge => t.judge = parsed,
                Role::Runner => t.runner = parsed,
            }
        }
        Ok(t)
    }
}

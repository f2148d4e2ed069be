//! Minimal iterative tool-calling loop that turns a task into a
//! [`ToolCallTrace`], so correct path rate can be measured end to end.

use serde_json::{Map, Value};

use super::{EvalError, TaskText, ToolCallTrace};
use crate::agents::{parse_agent_reply, KeyKind, PromptTemplates, Slots};
use crate::executor::ToolExecutor;
use crate::gateway::{ChatExchange, LanguageModel, Role};
use crate::model::{ExplorationInstance, ToolDocumentation};
use crate::par::{map_ordered, Execution};

const RETRY_NOTE: &str = "Reply with only the JSON object.";

enum Decision {
    Call { tool: usize, bindings: Map<String, Value> },
    Finish(String),
}

fn parse_decision(raw: &str, docs: &[ToolDocumentation]) -> Result<Decision, String> {
    let map = parse_agent_reply(raw, &[("Action", KeyKind::String)]).map_err(|e| e.message)?;
    match map["Action"].as_str().unwrap_or_default() {
        "finish" => match map.get("Answer") {
            Some(Value::String(s)) => Ok(Decision::Finish(s.clone())),
            Some(other) => Ok(Decision::Finish(other.to_string())),
            None => Err("a finish action needs an \"Answer\"".into()),
        },
        "call" => {
            let name = map
                .get("Tool")
                .and_then(Value::as_str)
                .ok_or("a call action needs a string \"Tool\"")?;
            let tool = docs
                .iter()
                .position(|d| d.name == name)
                .ok_or_else(|| format!("unknown tool \"{name}\""))?;
            let bindings = match map.get("Parameters") {
                None | Some(Value::Null) => Map::new(),
                Some(Value::Object(m)) => m.clone(),
                Some(_) => return Err("\"Parameters\" must be an object".into()),
            };
            Ok(Decision::Call { tool, bindings })
        }
        other => Err(format!("unknown action \"{other}\"")),
    }
}

/// Runs tasks against a fixed tool set.
pub struct TraceRunner<'a> {
    llm: &'a dyn LanguageModel,
    executor: &'a dyn ToolExecutor,
    templates: &'a PromptTemplates,
    max_steps: u32,
}

impl<'a> TraceRunner<'a> {
    pub fn new(
        llm: &'a dyn LanguageModel,
        executor: &'a dyn ToolExecutor,
        templates: &'a PromptTemplates,
        max_steps: u32,
    ) -> Self {
        TraceRunner {
            llm,
            executor,
            templates,
            max_steps,
        }
    }

    /// At most `max_steps` decisions. A decision that cannot be parsed is
    /// re-prompted once; a second failure ends the trace with an empty
    /// answer and `flagged` set. Chat calls are scoped by task id.
    pub fn run(&self, task: &TaskText, docs: &[ToolDocumentation]) -> Result<ToolCallTrace, EvalError> {
        if self.max_steps == 0 {
            return Err(EvalError::InvalidMaxSteps);
        }
        let tool_documentation = docs
            .iter()
            .map(ToolDocumentation::render)
            .collect::<Vec<_>>()
            .join("\n\n");
        let mut trace = ToolCallTrace {
            task_id: task.task_id.clone(),
            calls: Vec::new(),
            final_answer: String::new(),
            flagged: false,
        };
        let mut context: Vec<String> = Vec::new();
        for step in 0..self.max_steps {
            let mut slots = Slots::new();
            slots.insert("tool_documentation", tool_documentation.clone());
            slots.insert("task", task.text.clone());
            slots.insert("context", context.join("\n"));
            let (system, user) = self.templates.runner.render(&slots)?;

            let mut decision = Err(String::new());
            for attempt in 0..2 {
                let user_text = if attempt == 0 {
                    user.clone()
                } else {
                    format!(
                        "{user}\n\nYour previous reply could not be used: {}. {RETRY_NOTE}",
                        decision.as_ref().err().map(String::as_str).unwrap_or_default()
                    )
                };
                let reply = self.llm.chat(
                    Role::Runner,
                    Some(&task.task_id),
                    &ChatExchange::new(Role::Runner, system.clone(), user_text),
                )?;
                decision = parse_decision(&reply, docs);
                if decision.is_ok() {
                    break;
                }
            }
            match decision {
                Err(reason) => {
                    log::warn!("task {}: giving up after unusable decisions: {reason}", task.task_id);
                    trace.flagged = true;
                    return Ok(trace);
                }
                Ok(Decision::Finish(answer)) => {
                    trace.final_answer = answer;
                    return Ok(trace);
                }
                Ok(Decision::Call { tool, bindings }) => {
                    let doc = &docs[tool];
                    trace.calls.push(doc.name.clone());
                    let instance = ExplorationInstance {
                        query: task.text.clone(),
                        bindings: bindings.clone().into_iter().collect(),
                        iteration: step + 1,
                    };
                    let output = match self.executor.execute(&instance, doc) {
                        Ok(response) => response.body,
                        Err(e) => format!("error: {e}"),
                    };
                    context.push(format!(
                        "{{\"Tool\": {}, \"Parameters\": {}, \"Response\": {}}}",
                        Value::String(doc.name.clone()),
                        Value::Object(bindings),
                        Value::String(output)
                    ));
                }
            }
        }
        Ok(trace)
    }

    /// Runs every task; results keep task order.
    pub fn run_all(
        &self,
        tasks: &[TaskText],
        docs: &[ToolDocumentation],
        exec: Execution,
    ) -> Vec<Result<ToolCallTrace, EvalError>> {
        map_ordered(tasks, exec, |t| self.run(t, docs))
    }
}

pub fn run_trace(
    task: &TaskText,
    docs: &[ToolDocumentation],
    llm: &dyn LanguageModel,
    executor: &dyn ToolExecutor,
    max_steps: u32,
    templates: &PromptTemplates,
) -> Result<ToolCallTrace, EvalError> {
    TraceRunner::new(llm, executor, templates, max_steps).run(task, docs)
}

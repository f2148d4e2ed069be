use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallTrace {
    pub task_id: String,
    pub calls: Vec<String>,
    #[serde(default)]
    pub final_answer: String,
    /// Set when the runner gave up on unparsable decisions.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPath {
    pub task_id: String,
    pub path: Vec<String>,
}

/// True iff `path` is a (not necessarily contiguous) subsequence of `calls`.
pub fn is_correct_path(calls: &[String], path: &[String]) -> bool {
    let mut remaining = path.iter().peekable();
    for call in calls {
        if remaining.peek() == Some(&call) {
            remaining.next();
        }
    }
    remaining.peek().is_none()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskVerdict {
    pub task_id: String,
    pub correct: bool,
    pub has_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub cp_rate: f64,
    pub tasks: Vec<TaskVerdict>,
}

/// Fraction of ground-truth tasks whose trace contains the path. A task
/// without a trace counts as incorrect.
pub fn correct_path_rate(traces: &[ToolCallTrace], gts: &[GroundTruthPath]) -> Result<PathReport, EvalError> {
    let mut by_task = BTreeMap::new();
    for t in traces {
        if by_task.insert(t.task_id.as_str(), t).is_some() {
            return Err(EvalError::DuplicateTask(t.task_id.clone()));
        }
    }
    let mut gt_ids = HashSet::new();
    for g in gts {
        if !gt_ids.insert(g.task_id.as_str()) {
            return Err(EvalError::DuplicateTask(g.task_id.clone()));
        }
    }
    let unknown: Vec<String> = traces
        .iter()
        .filter(|t| !gt_ids.contains(t.task_id.as_str()))
        .map(|t| t.task_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownTasks(unknown));
    }
    let tasks: Vec<TaskVerdict> = gts
        .iter()
        .map(|g| {
            let trace = by_task.get(g.task_id.as_str());
            TaskVerdict {
                task_id: g.task_id.clone(),
                correct: trace.is_some_and(|t| is_correct_path(&t.calls, &g.path)),
                has_trace: trace.is_some(),
            }
        })
        .collect();
    let cp_rate = if tasks.is_empty() {
        0.0
    } else {
        tasks.iter().filter(|t| t.correct).count() as f64 / tasks.len() as f64
    };
    Ok(PathReport { cp_rate, tasks })
}

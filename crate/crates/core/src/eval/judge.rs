use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::agents::{PromptTemplates, Slots};
use crate::gateway::{ChatExchange, LanguageModel, Role};
use crate::par::{map_ordered, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskText {
    pub task_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAnswer {
    pub task_id: String,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// The first-presented answer won.
    First,
    Second,
    Tie,
}

fn parse_verdict(reply: &str) -> Option<Verdict> {
    let cleaned = reply
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_ascii_uppercase();
    match cleaned.as_str() {
        "A" => Some(Verdict::First),
        "B" => Some(Verdict::Second),
        "TIE" => Some(Verdict::Tie),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedTask {
    pub task_id: String,
    /// Whether answer set A was shown in position "A".
    pub a_presented_first: bool,
    pub verdict: Verdict,
    /// Score of answer set A: 1 win, 0.5 tie, 0 loss.
    pub score_a: f64,
    /// The judge never produced a valid verdict; counted as a tie.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinReport {
    pub win_rate: f64,
    pub tasks: Vec<JudgedTask>,
}

/// Presentation order for each task: `true` when A is shown first. Drawn
/// from a ChaCha8 stream seeded with `seed`, one draw per task in order.
pub fn presentation_order(task_count: usize, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..task_count).map(|_| rng.gen_bool(0.5)).collect()
}

/// Pairwise win rate of answer set A over B under an LLM judge:
/// `(wins + 0.5 * ties) / tasks`.
pub fn win_rate(
    answers_a: &[TaskAnswer],
    answers_b: &[TaskAnswer],
    tasks: &[TaskText],
    judge: &dyn LanguageModel,
    templates: &PromptTemplates,
    seed: u64,
    exec: Execution,
) -> Result<WinReport, EvalError> {
    let index = |answers: &[TaskAnswer]| -> HashMap<String, String> {
        answers.iter().map(|a| (a.task_id.clone(), a.answer.clone())).collect()
    };
    let (a, b) = (index(answers_a), index(answers_b));
    let missing: Vec<String> = tasks
        .iter()
        .filter(|t| !a.contains_key(&t.task_id) || !b.contains_key(&t.task_id))
        .map(|t| t.task_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::UnknownTasks(missing));
    }
    let order = presentation_order(tasks.len(), seed);
    let jobs: Vec<(&TaskText, bool)> = tasks.iter().zip(order).collect();
    let judged = map_ordered(&jobs, exec, |(task, a_first)| {
        let (ans_a, ans_b) = (&a[&task.task_id], &b[&task.task_id]);
        let (first, second) = if *a_first { (ans_a, ans_b) } else { (ans_b, ans_a) };
        judge_one(task, first, second, *a_first, judge, templates)
    });
    let tasks = judged.into_iter().collect::<Result<Vec<_>, _>>()?;
    let win_rate = if tasks.is_empty() {
        0.0
    } else {
        tasks.iter().map(|t| t.score_a).sum::<f64>() / tasks.len() as f64
    };
    Ok(WinReport { win_rate, tasks })
}

fn judge_one(
    task: &TaskText,
    first: &str,
    second: &str,
    a_presented_first: bool,
    judge: &dyn LanguageModel,
    templates: &PromptTemplates,
) -> Result<JudgedTask, EvalError> {
    let mut slots = Slots::new();
    slots.insert("task", task.text.clone());
    slots.insert("answer_a", first.to_string());
    slots.insert("answer_b", second.to_string());
    let (system, user) = templates.judge.render(&slots)?;

    let mut verdict = None;
    for attempt in 0..2 {
        let user_text = if attempt == 0 {
            user.clone()
        } else {
            format!("{user}\n\nReply with exactly one of: A, B, TIE.")
        };
        let reply = judge.chat(
            Role::Judge,
            Some(&task.task_id),
            &ChatExchange::new(Role::Judge, system.clone(), user_text),
        )?;
        verdict = parse_verdict(&reply);
        if verdict.is_some() {
            break;
        }
    }
    let flagged = verdict.is_none();
    let verdict = verdict.unwrap_or(Verdict::Tie);
    let score_a = match (verdict, a_presented_first) {
        (Verdict::Tie, _) => 0.5,
        (Verdict::First, true) | (Verdict::Second, false) => 1.0,
        _ => 0.0,
    };
    Ok(JudgedTask {
        task_id: task.task_id.clone(),
        a_presented_first,
        verdict,
        score_a,
        flagged,
    })
}

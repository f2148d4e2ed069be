//! Evaluation metrics and harnesses: correct path rate over tool-call
//! traces, LLM-judged win rate, BM25 retrieval with NDCG@k, and a minimal
//! tool-calling runner that produces traces.

pub mod judge;
pub mod paths;
pub mod retrieval;
pub mod trace;

use thiserror::Error;

use crate::agents::TemplateError;
use crate::gateway::GatewayError;

pub use judge::{presentation_order, win_rate, JudgedTask, TaskAnswer, TaskText, Verdict, WinReport};
pub use paths::{correct_path_rate, is_correct_path, GroundTruthPath, PathReport, TaskVerdict, ToolCallTrace};
pub use retrieval::{
    bm25_rank, evaluate_retrieval, ndcg_at_k, rank_with, Bm25Scorer, CorpusDoc, CorpusQuery, QueryRelevance,
    QueryScores, RetrievalCorpus, RetrievalReport, Scorer,
};
pub use trace::{run_trace, TraceRunner};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("task ids without a counterpart: {}", .0.join(", "))]
    UnknownTasks(Vec<String>),
    #[error("unknown query id {0:?}")]
    UnknownQuery(String),
    #[error("duplicate query id {0:?}")]
    DuplicateQuery(String),
    #[error("retrieval corpus has no documents")]
    EmptyCorpus,
    #[error("cutoff k must be at least 1")]
    InvalidCutoff,
    #[error("max_steps must be at least 1")]
    InvalidMaxSteps,
    #[error("model call failed: {0}")]
    Gateway(String),
    #[error("prompt template: {0}")]
    Template(String),
}

impl From<GatewayError> for EvalError {
    fn from(e: GatewayError) -> Self {
        EvalError::Gateway(e.to_string())
    }
}

impl From<TemplateError> for EvalError {
    fn from(e: TemplateError) -> Self {
        EvalError::Template(e.to_string())
    }
}

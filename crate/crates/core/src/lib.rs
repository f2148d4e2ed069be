//! Iterative tool-documentation refinement driven by LLM agents.
//!
//! An Explorer probes each tool with diverse queries, an Analyzer critiques
//! the documentation against what the tool actually returned, and a Rewriter
//! produces the next version. Refinement stops once consecutive versions
//! barely change. Evaluation helpers cover correct path rate, judged win
//! rate, and BM25 tool retrieval.

pub mod agents;
pub mod cli;
pub mod engine;
pub mod eval;
pub mod executor;
pub mod gateway;
pub mod metrics;
pub mod model;
pub mod par;

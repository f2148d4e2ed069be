//! The refinement loop: explore, gate, execute, analyze, rewrite, measure
//! change, and stop once consecutive versions barely differ.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{diversity_gate, AgentError, Agents, PromptTemplates};
use crate::executor::{ExecutorError, ToolExecutor};
use crate::gateway::{GatewayError, LanguageModel};
use crate::metrics::{change_score, MetricError};
use crate::model::{
    ensure_unique_names, validate_records, ExplorationDirection, ExplorationInstance, IterationRecord, ModelError,
    RefinementConfig, RefinementTrajectory, TerminationReason, ToolDocumentation, ToolResponse,
};
use crate::par::{map_ordered, Execution};

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot write {path}: {source}")]
    Persist {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl RefineError {
    /// Errors that stop the whole run rather than one tool.
    pub fn is_infrastructure(&self) -> bool {
        match self {
            RefineError::Persist { .. } => true,
            RefineError::Agent(AgentError::Gateway(g)) => g.is_infrastructure(),
            _ => false,
        }
    }
}

impl From<GatewayError> for RefineError {
    fn from(e: GatewayError) -> Self {
        RefineError::Agent(AgentError::Gateway(e))
    }
}

/// Receives each iteration record as soon as it is complete.
pub trait RecordSink {
    fn write(&mut self, record: &IterationRecord) -> io::Result<()>;
}

impl RecordSink for Vec<IterationRecord> {
    fn write(&mut self, record: &IterationRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Appends one JSON line per record and flushes it, so a killed run leaves
/// a valid prefix.
pub struct JsonlTrajectoryWriter {
    file: File,
}

impl JsonlTrajectoryWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(JsonlTrajectoryWriter {
            file: File::create(path)?,
        })
    }
}

impl RecordSink for JsonlTrajectoryWriter {
    fn write(&mut self, record: &IterationRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryReadError {
    #[error("cannot read trajectory: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

/// Parses and validates a `trajectory.jsonl` stream. Errors name the
/// 1-based line that failed.
pub fn read_trajectory(reader: impl io::Read) -> Result<Vec<IterationRecord>, TrajectoryReadError> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: IterationRecord = serde_json::from_str(&line).map_err(|e| TrajectoryReadError::Line {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    validate_records(&records)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOutcome {
    pub final_doc: ToolDocumentation,
    pub trajectory: RefinementTrajectory,
    pub iterations_used: u32,
    pub terminated_reason: TerminationReason,
}

/// Result of refining one tool, including the call counts spent on it even
/// when it aborted.
#[derive(Debug)]
pub struct ToolRun {
    pub tool: String,
    pub result: Result<RefinementOutcome, RefineError>,
    pub llm_calls: u64,
    pub tool_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSummary {
    pub tool: String,
    pub iterations_used: u32,
    pub terminated_reason: TerminationReason,
    pub final_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub tool: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total_tools: usize,
    pub refined: Vec<ToolSummary>,
    pub aborted: Vec<AbortRecord>,
    pub llm_calls: u64,
    pub tool_calls: u64,
}

#[derive(Debug)]
pub struct RunResult {
    pub outcomes: Vec<RefinementOutcome>,
    pub report: RunReport,
}

/// Directory name used for a tool under the output root.
pub fn tool_dir_name(tool: &str) -> String {
    let name: String = tool
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if name.chars().all(|c| c == '.') {
        name.replace('.', "_")
    } else {
        name
    }
}

pub struct Refiner<'a> {
    config: &'a RefinementConfig,
    llm: &'a dyn LanguageModel,
    executor: &'a dyn ToolExecutor,
    templates: &'a PromptTemplates,
}

impl<'a> Refiner<'a> {
    pub fn new(
        config: &'a RefinementConfig,
        llm: &'a dyn LanguageModel,
        executor: &'a dyn ToolExecutor,
        templates: &'a PromptTemplates,
    ) -> Self {
        Refiner {
            config,
            llm,
            executor,
            templates,
        }
    }

    /// Refines a single tool, streaming each record to `sink`.
    pub fn refine_tool(&self, raw: &ToolDocumentation, sink: &mut dyn RecordSink) -> ToolRun {
        let agents = Agents::new(self.llm, self.templates, self.config.parse_retries).scoped(&raw.name);
        let mut tool_calls = 0;
        let result = self.run_loop(raw, &agents, &mut tool_calls, sink);
        ToolRun {
            tool: raw.name.clone(),
            result,
            llm_calls: agents.calls(),
            tool_calls,
        }
    }

    fn run_loop(
        &self,
        raw: &ToolDocumentation,
        agents: &Agents<'_>,
        tool_calls: &mut u64,
        sink: &mut dyn RecordSink,
    ) -> Result<RefinementOutcome, RefineError> {
        raw.validate()?;
        let cfg = self.config;
        let mut trajectory = RefinementTrajectory::new(raw.clone());
        let mut doc = raw.clone();
        let mut doc_history = vec![raw.clone()];
        let mut direction = ExplorationDirection::seed();
        let mut examples: Vec<(ExplorationInstance, ToolResponse)> = Vec::new();
        let mut accepted_queries: Vec<String> = Vec::new();
        let mut accepted_embeddings = Vec::new();

        for i in 1..=cfg.max_iterations {
            let first = agents.explorer_generate(&doc, &direction, &accepted_queries, i, None)?;
            let gate = diversity_gate(
                first,
                &accepted_embeddings,
                cfg.phi,
                cfg.reflection_retries,
                agents.llm(),
                |reflection| agents.explorer_generate(&doc, &direction, &accepted_queries, i, Some(reflection)),
            )?;

            *tool_calls += 1;
            let response = self.executor.execute(&gate.instance, &doc)?;
            accepted_queries.push(gate.instance.query.clone());
            accepted_embeddings.push(gate.embedding);
            examples.push((gate.instance.clone(), response.clone()));

            let suggestion = agents.analyzer_suggest(&doc, &examples, &doc_history, i)?;
            let rewrite = agents.rewriter_rewrite(&doc, &examples, &suggestion, &doc_history, i)?;

            let emb_new = self.llm.embed(&rewrite.doc.render())?;
            let emb_old = self.llm.embed(&doc.render())?;
            let delta = change_score(&rewrite.doc, &doc, &emb_new, &emb_old)?;

            let termination = if delta > cfg.tau {
                Some(TerminationReason::DeltaThreshold)
            } else if i == cfg.max_iterations {
                Some(TerminationReason::MaxIterations)
            } else {
                None
            };
            let record = IterationRecord {
                iteration: i,
                instance: gate.instance,
                response,
                suggestion,
                direction: rewrite.direction.clone(),
                doc_before: doc.clone(),
                doc_after: rewrite.doc.clone(),
                delta: Some(delta),
                rejected_queries: gate.rejected,
                gate_forced: gate.forced,
                direction_defaulted: rewrite.direction_defaulted,
                termination,
            };
            sink.write(&record).map_err(|source| RefineError::Persist {
                path: format!("trajectory of {}", raw.name),
                source,
            })?;
            trajectory = trajectory.append_record(record)?;

            doc = rewrite.doc;
            doc_history.push(doc.clone());
            direction = rewrite.direction;
            if let Some(reason) = termination {
                return Ok(RefinementOutcome {
                    final_doc: doc,
                    trajectory,
                    iterations_used: i,
                    terminated_reason: reason,
                });
            }
        }
        unreachable!("the last iteration always terminates")
    }

    /// Refines every tool independently, up to `config.parallelism` at once.
    ///
    /// With `out`, writes `<out>/<tool>/trajectory.jsonl`,
    /// `<out>/<tool>/final.json`, `<out>/refined_tools.json` and
    /// `<out>/report.json`.
    pub fn refine_set(&self, docs: &[ToolDocumentation], out: Option<&Path>) -> Result<RunResult, RefineError> {
        ensure_unique_names(docs)?;
        let persist = |path: &Path, source| RefineError::Persist {
            path: path.display().to_string(),
            source,
        };
        if let Some(out) = out {
            fs::create_dir_all(out).map_err(|e| persist(out, e))?;
        }
        let exec = Execution::with_workers(self.config.parallelism);
        let runs = map_ordered(docs, exec, |doc| match out {
            None => self.refine_tool(doc, &mut Vec::new()),
            Some(out) => self.refine_tool_to_dir(doc, out),
        });

        let mut outcomes = Vec::new();
        let mut report = RunReport {
            total_tools: docs.len(),
            refined: Vec::new(),
            aborted: Vec::new(),
            llm_calls: 0,
            tool_calls: 0,
        };
        let mut fatal = None;
        for run in runs {
            report.llm_calls += run.llm_calls;
            report.tool_calls += run.tool_calls;
            match run.result {
                Ok(outcome) => {
                    report.refined.push(ToolSummary {
                        tool: run.tool,
                        iterations_used: outcome.iterations_used,
                        terminated_reason: outcome.terminated_reason,
                        final_delta: outcome.trajectory.records.last().and_then(|r| r.delta),
                    });
                    outcomes.push(outcome);
                }
                Err(e) if e.is_infrastructure() => {
                    fatal.get_or_insert(e);
                }
                Err(e) => {
                    log::warn!("tool {} aborted: {e}", run.tool);
                    report.aborted.push(AbortRecord {
                        tool: run.tool,
                        error: e.to_string(),
                    });
                }
            }
        }
        if let Some(e) = fatal {
            return Err(e);
        }
        if let Some(out) = out {
            let finals: Vec<&ToolDocumentation> = outcomes.iter().map(|o| &o.final_doc).collect();
            write_json(&out.join("refined_tools.json"), &finals).map_err(|e| persist(out, e))?;
            write_json(&out.join("report.json"), &report).map_err(|e| persist(out, e))?;
        }
        Ok(RunResult { outcomes, report })
    }

    fn refine_tool_to_dir(&self, doc: &ToolDocumentation, out: &Path) -> ToolRun {
        let dir: PathBuf = out.join(tool_dir_name(&doc.name));
        let persist_failure = |source| ToolRun {
            tool: doc.name.clone(),
            result: Err(RefineError::Persist {
                path: dir.display().to_string(),
                source,
            }),
            llm_calls: 0,
            tool_calls: 0,
        };
        if let Err(e) = fs::create_dir_all(&dir) {
            return persist_failure(e);
        }
        let mut writer = match JsonlTrajectoryWriter::create(&dir.join("trajectory.jsonl")) {
            Ok(w) => w,
            Err(e) => return persist_failure(e),
        };
        let run = self.refine_tool(doc, &mut writer);
        if let Ok(outcome) = &run.result {
            if let Err(e) = write_json(&dir.join("final.json"), &outcome.final_doc) {
                return persist_failure(e);
            }
        }
        run
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_dir_names_are_path_safe() {
        assert_eq!(tool_dir_name("QR Code Image Generator"), "QR_Code_Image_Generator");
        assert_eq!(tool_dir_name("a/../b"), "a_.._b");
        assert_eq!(tool_dir_name("GET_tv_latest"), "GET_tv_latest");
        assert_eq!(tool_dir_name(".."), "__");
    }

    #[test]
    fn read_trajectory_names_bad_line() {
        let err = read_trajectory("{\"iteration\": 1".as_bytes()).unwrap_err();
        assert!(matches!(err, TrajectoryReadError::Line { line: 1, .. }));
    }
}

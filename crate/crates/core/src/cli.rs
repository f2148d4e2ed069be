//! The `draft` command line: `refine`, `eval paths`, `eval retrieval`,
//! `eval win-rate` and `inspect`.
//!
//! Exit codes: 0 success, 1 usage or infrastructure error, 2 when some tools
//! aborted during refinement.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::PromptTemplates;
use crate::engine::{read_trajectory, RefineError, Refiner, TrajectoryReadError};
use crate::eval::{
    correct_path_rate, evaluate_retrieval, win_rate, Bm25Scorer, CorpusDoc, CorpusQuery, EvalError, GroundTruthPath,
    QueryRelevance, RetrievalCorpus, TaskAnswer, TaskText, ToolCallTrace,
};
use crate::executor::{load_sandbox, HttpExecutor, ToolExecutor};
use crate::gateway::{Gateway, HttpBackend, HttpBackendConfig, MockBackend, TokenBucket};
use crate::model::{
    parse_documentation_set, BackendKind, IterationRecord, ModelError, RefinementConfig, ResponseStatus,
};
use crate::par::Execution;

/// Bearer token attached to live tool calls.
const TOOL_TOKEN_VAR: &str = "DRAFT_TOOL_TOKEN";

#[derive(Debug, Parser)]
#[command(
    name = "draft",
    version,
    about = "Refine tool documentation with LLM agents and evaluate tool use"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Refine every tool in a documentation set.
    Refine(RefineArgs),
    /// Compute evaluation metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Render a trajectory.jsonl file.
    Inspect(InspectArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Correct path rate of tool-call traces against ground-truth paths.
    Paths(PathsArgs),
    /// BM25 tool retrieval scored with NDCG@k.
    Retrieval(RetrievalArgs),
    /// Pairwise win rate of answer set A over B under an LLM judge.
    WinRate(WinRateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// JSON file with configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LLM backend; defaults to the configured one.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Scripted replies for the mock backend.
    #[arg(long)]
    tape: Option<PathBuf>,
    /// Seed for the mock backend and any sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker count.
    #[arg(long)]
    parallel: Option<usize>,
    /// Directory overriding the built-in prompt templates.
    #[arg(long)]
    templates_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Tool documentation set (JSON array).
    #[arg(long)]
    tools: PathBuf,
    /// Output directory for trajectories, refined tools and reports.
    #[arg(long)]
    out: PathBuf,
    /// Maximum iterations per tool.
    #[arg(long)]
    max_iters: Option<u32>,
    /// Diversity threshold on query similarity, in (0, 1].
    #[arg(long)]
    phi: Option<f64>,
    /// Termination threshold on the change score, in (0, 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Sandbox fixture directory; without it tools are called over HTTP.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Base URL for live tool calls whose URL templates are relative.
    #[arg(long)]
    tool_base_url: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct PathsArgs {
    /// JSONL of tool-call traces.
    #[arg(long)]
    traces: PathBuf,
    /// JSONL of ground-truth paths.
    #[arg(long)]
    gt: PathBuf,
    /// Directory for report.json and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RetrievalArgs {
    /// Tool documentation set, or a JSON array of {"name", "text"}.
    #[arg(long)]
    docs: PathBuf,
    /// JSONL of {"query_id", "text"}.
    #[arg(long)]
    queries: PathBuf,
    /// JSONL of {"query_id", "relevant": [names]}.
    #[arg(long)]
    qrels: PathBuf,
    /// Comma-separated NDCG cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "1,10")]
    k: Vec<usize>,
    /// Worker count.
    #[arg(long)]
    parallel: Option<usize>,
    /// Directory for report.json and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WinRateArgs {
    /// JSONL of {"task_id", "text"}.
    #[arg(long)]
    tasks: PathBuf,
    /// JSONL of {"task_id", "answer"}.
    #[arg(long)]
    answers_a: PathBuf,
    /// JSONL of {"task_id", "answer"}.
    #[arg(long)]
    answers_b: PathBuf,
    /// Directory for report.json and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Trajectory file written by `refine`.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    /// Input path to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub backends: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// True when every backend is offline (mock model, sandbox tools).
    pub deterministic: bool,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
}

struct ManifestBuilder {
    command: String,
    config: Value,
    inputs: BTreeMap<String, String>,
    backends: BTreeMap<String, String>,
    seed: Option<u64>,
    deterministic: bool,
    started_at: String,
}

impl ManifestBuilder {
    fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: Value::Null,
            inputs: BTreeMap::new(),
            backends: BTreeMap::new(),
            seed: None,
            deterministic: true,
            started_at: now(),
        }
    }

    fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(bytes)));
    }

    /// Digests every regular file directly inside `dir`.
    fn input_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| read_err(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for p in paths {
            let bytes = read_bytes(&p)?;
            self.input(&p, &bytes);
        }
        Ok(())
    }

    fn finish(self, exit_code: i32) -> RunManifest {
        RunManifest {
            command: self.command,
            config: self.config,
            inputs: self.inputs,
            backends: self.backends,
            seed: self.seed,
            deterministic: self.deterministic,
            started_at: self.started_at,
            finished_at: now(),
            exit_code,
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn read_err(path: &Path, source: io::Error) -> CliError {
    CliError::Read {
        path: path.display().to_string(),
        source,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| read_err(path, e))
}

fn input_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Input {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Parses one JSON value per non-blank line; errors name the line.
fn parse_jsonl<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Vec<T>, CliError> {
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(bytes).lines().enumerate() {
        let line = line.map_err(|e| read_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| input_err(path, format!("line {}: {e}", idx + 1)))?;
        items.push(item);
    }
    Ok(items)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    write_file(&out.join("manifest.json"), &text)
}

/// Emits the manifest into `out`, or to the diagnostic stream without one.
fn emit_manifest(out: Option<&Path>, manifest: &RunManifest) -> Result<(), CliError> {
    match out {
        Some(out) => write_manifest(out, manifest),
        None => {
            eprintln!(
                "manifest: {}",
                serde_json::to_string(manifest).expect("manifest serializes")
            );
            Ok(())
        }
    }
}

/// Loads `--config` (if any) and applies the shared backend flags.
fn load_config(args: &BackendArgs, manifest: &mut ManifestBuilder) -> Result<RefinementConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let bytes = read_bytes(path)?;
            manifest.input(path, &bytes);
            serde_json::from_slice(&bytes).map_err(|e| input_err(path, e.to_string()))?
        }
        None => RefinementConfig::default(),
    };
    if let Some(b) = args.backend {
        config.backend = b.into();
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(p) = args.parallel {
        config.parallelism = p;
    }
    Ok(config)
}

fn load_templates(args: &BackendArgs, manifest: &mut ManifestBuilder) -> Result<PromptTemplates, CliError> {
    match &args.templates_dir {
        None => Ok(PromptTemplates::builtin()),
        Some(dir) => {
            manifest.input_dir(dir)?;
            PromptTemplates::load_dir(dir).map_err(|e| input_err(dir, e.to_string()))
        }
    }
}

fn build_gateway(
    args: &BackendArgs,
    config: &RefinementConfig,
    manifest: &mut ManifestBuilder,
) -> Result<Gateway, CliError> {
    let gateway = match config.backend {
        BackendKind::Mock => {
            let path = args
                .tape
                .as_ref()
                .ok_or_else(|| CliError::Usage("the mock backend needs --tape".into()))?;
            let bytes = read_bytes(path)?;
            manifest.input(path, &bytes);
            let backend =
                MockBackend::from_tape_json(&bytes, config.seed).map_err(|e| input_err(path, e.to_string()))?;
            Gateway::new(backend)
        }
        BackendKind::Http => {
            manifest.deterministic = false;
            let http = HttpBackendConfig::from_env(
                &config.chat_model,
                &config.embedding_model,
                Duration::from_secs(config.http_timeout_secs),
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            Gateway::new(HttpBackend::new(http))
        }
    };
    let gateway = if config.requests_per_second > 0.0 {
        let burst = u32::try_from(config.parallelism.max(1)).unwrap_or(u32::MAX);
        gateway.with_rate_limit(TokenBucket::new(config.requests_per_second, burst))
    } else {
        gateway
    };
    manifest.backends.insert("llm".into(), gateway.describe());
    Ok(gateway)
}

fn cmd_refine(args: &RefineArgs) -> Result<i32, CliError> {
    let mut manifest = ManifestBuilder::new("refine");
    let mut config = load_config(&args.backend, &mut manifest)?;
    if let Some(v) = args.max_iters {
        config.max_iterations = v;
    }
    if let Some(v) = args.phi {
        config.phi = v;
    }
    if let Some(v) = args.tau {
        config.tau = v;
    }
    config.validate()?;
    manifest.seed = Some(config.seed);
    manifest.config = serde_json::to_value(&config).expect("config serializes");

    let tool_bytes = read_bytes(&args.tools)?;
    manifest.input(&args.tools, &tool_bytes);
    let docs = parse_documentation_set(&tool_bytes).map_err(|e| input_err(&args.tools, e.to_string()))?;
    let templates = load_templates(&args.backend, &mut manifest)?;
    let gateway = build_gateway(&args.backend, &config, &mut manifest)?;

    let executor: Box<dyn ToolExecutor> = match &args.fixtures {
        Some(dir) => {
            manifest.input_dir(dir)?;
            let registry =
                load_sandbox(dir, config.response_truncation_chars).map_err(|e| CliError::Usage(e.to_string()))?;
            for warning in registry.lint() {
                log::warn!("{warning}");
            }
            Box::new(registry)
        }
        None => {
            manifest.deterministic = false;
            let mut exec = HttpExecutor::new(
                Duration::from_secs(config.http_timeout_secs),
                config.response_truncation_chars,
                config.parallelism,
            );
            if let Some(base) = &args.tool_base_url {
                exec = exec.with_base_url(base.clone());
            }
            if let Some(token) = std::env::var(TOOL_TOKEN_VAR).ok().filter(|t| !t.is_empty()) {
                exec = exec.with_bearer(token);
            }
            Box::new(exec)
        }
    };
    manifest.backends.insert("tools".into(), executor.describe());

    let refiner = Refiner::new(&config, &gateway, executor.as_ref(), &templates);
    let result = refiner.refine_set(&docs, Some(&args.out))?;
    let report = &result.report;
    eprintln!(
        "refined {} of {} tools ({} aborted); {} model calls, {} tool calls",
        report.refined.len(),
        report.total_tools,
        report.aborted.len(),
        report.llm_calls,
        report.tool_calls
    );
    let code = if report.aborted.is_empty() { 0 } else { 2 };
    write_manifest(&args.out, &manifest.finish(code))?;
    Ok(code)
}

fn ensure_out(out: Option<&Path>) -> Result<(), CliError> {
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|source| CliError::Write {
            path: out.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

/// Prints a metric report and, with `out`, also writes it to report.json.
fn publish(out: Option<&Path>, report: &Value) -> Result<(), CliError> {
    let line = serde_json::to_string(report).expect("report serializes");
    println!("{line}");
    if let Some(out) = out {
        write_file(&out.join("report.json"), &(line + "\n"))?;
    }
    Ok(())
}

fn cmd_eval_paths(args: &PathsArgs) -> Result<i32, CliError> {
    let mut manifest = ManifestBuilder::new("eval paths");
    manifest.config = json!({});
    let trace_bytes = read_bytes(&args.traces)?;
    let gt_bytes = read_bytes(&args.gt)?;
    manifest.input(&args.traces, &trace_bytes);
    manifest.input(&args.gt, &gt_bytes);
    let traces: Vec<ToolCallTrace> = parse_jsonl(&args.traces, &trace_bytes)?;
    let gts: Vec<GroundTruthPath> = parse_jsonl(&args.gt, &gt_bytes)?;
    let report = correct_path_rate(&traces, &gts)?;
    ensure_out(args.out.as_deref())?;
    publish(
        args.out.as_deref(),
        &serde_json::to_value(&report).expect("report serializes"),
    )?;
    emit_manifest(args.out.as_deref(), &manifest.finish(0))?;
    Ok(0)
}

fn load_corpus_docs(path: &Path, bytes: &[u8]) -> Result<Vec<CorpusDoc>, CliError> {
    if let Ok(docs) = parse_documentation_set(bytes) {
        return Ok(docs
            .iter()
            .map(|d| CorpusDoc {
                name: d.name.clone(),
                text: d.render(),
            })
            .collect());
    }
    serde_json::from_slice(bytes).map_err(|e| {
        input_err(
            path,
            format!("expected a tool documentation set or an array of {{\"name\", \"text\"}}: {e}"),
        )
    })
}

fn cmd_eval_retrieval(args: &RetrievalArgs) -> Result<i32, CliError> {
    let mut manifest = ManifestBuilder::new("eval retrieval");
    manifest.config = json!({ "k": args.k });
    let mut read = |p: &Path| -> Result<Vec<u8>, CliError> {
        let bytes = read_bytes(p)?;
        manifest.input(p, &bytes);
        Ok(bytes)
    };
    let (doc_bytes, query_bytes, qrel_bytes) = (read(&args.docs)?, read(&args.queries)?, read(&args.qrels)?);
    let docs = load_corpus_docs(&args.docs, &doc_bytes)?;
    let queries: Vec<CorpusQuery> = parse_jsonl(&args.queries, &query_bytes)?;
    let qrels: Vec<QueryRelevance> = parse_jsonl(&args.qrels, &qrel_bytes)?;
    let corpus = RetrievalCorpus::new(docs, queries, qrels)?;
    let scorer = Bm25Scorer::new(corpus.docs());
    let exec = Execution::with_workers(args.parallel.unwrap_or(1));
    let report = evaluate_retrieval(&corpus, &scorer, &args.k, exec)?;

    let mut out = serde_json::Map::new();
    for (key, value) in &report.mean {
        out.insert(key.clone(), json!(value));
    }
    out.insert(
        "queries".into(),
        serde_json::to_value(&report.queries).expect("report serializes"),
    );
    ensure_out(args.out.as_deref())?;
    publish(args.out.as_deref(), &Value::Object(out))?;
    emit_manifest(args.out.as_deref(), &manifest.finish(0))?;
    Ok(0)
}

fn cmd_eval_win_rate(args: &WinRateArgs) -> Result<i32, CliError> {
    let mut manifest = ManifestBuilder::new("eval win-rate");
    let config = load_config(&args.backend, &mut manifest)?;
    config.validate()?;
    manifest.seed = Some(config.seed);
    manifest.config = serde_json::to_value(&config).expect("config serializes");
    let mut read = |p: &Path| -> Result<Vec<u8>, CliError> {
        let bytes = read_bytes(p)?;
        manifest.input(p, &bytes);
        Ok(bytes)
    };
    let (t, a, b) = (read(&args.tasks)?, read(&args.answers_a)?, read(&args.answers_b)?);
    let tasks: Vec<TaskText> = parse_jsonl(&args.tasks, &t)?;
    let answers_a: Vec<TaskAnswer> = parse_jsonl(&args.answers_a, &a)?;
    let answers_b: Vec<TaskAnswer> = parse_jsonl(&args.answers_b, &b)?;
    let templates = load_templates(&args.backend, &mut manifest)?;
    let gateway = build_gateway(&args.backend, &config, &mut manifest)?;
    let exec = Execution::with_workers(config.parallelism);
    let report = win_rate(&answers_a, &answers_b, &tasks, &gateway, &templates, config.seed, exec)?;
    ensure_out(args.out.as_deref())?;
    publish(
        args.out.as_deref(),
        &serde_json::to_value(&report).expect("report serializes"),
    )?;
    emit_manifest(args.out.as_deref(), &manifest.finish(0))?;
    Ok(0)
}

fn status_label(status: ResponseStatus) -> &'static str {
    match status {
        ResponseStatus::Ok => "ok",
        ResponseStatus::ToolError => "tool_error",
        ResponseStatus::TransportError => "transport_error",
        ResponseStatus::Timeout => "timeout",
    }
}

/// Human-readable rendering of a trajectory, one block per iteration.
pub fn render_trajectory_text(records: &[IterationRecord]) -> String {
    let mut s = String::new();
    if let Some(first) = records.first() {
        let _ = writeln!(s, "Tool: {}", first.doc_before.name);
        let _ = writeln!(s, "Original description: {}", first.doc_before.description);
    }
    for r in records {
        let _ = writeln!(s, "\nIteration {}", r.iteration);
        let _ = writeln!(s, "Explorer:");
        let _ = writeln!(s, "  User Query: {}", r.instance.query);
        let params = serde_json::to_string(&r.instance.bindings).expect("bindings serialize");
        let _ = writeln!(s, "  Parameters: {params}");
        for rejected in &r.rejected_queries {
            let _ = writeln!(
                s,
                "  Rejected query (similarity {:.3}): {}",
                rejected.max_similarity, rejected.query
            );
        }
        if r.gate_forced {
            let _ = writeln!(
                s,
                "  Note: accepted as the least similar attempt after the reflection budget ran out"
            );
        }
        let http = r
            .response
            .http_status
            .map(|c| format!(", HTTP {c}"))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "  API response ({}{http}): {}",
            status_label(r.response.status),
            r.response.body
        );
        let _ = writeln!(s, "Analyzer:");
        let _ = writeln!(s, "  Suggestions: {}", r.suggestion.text);
        let _ = writeln!(s, "Rewriter:");
        let _ = writeln!(s, "  Rewritten description: {}", r.doc_after.description);
        if r.direction_defaulted {
            let _ = writeln!(s, "  Suggestions for exploring: (none given)");
        } else {
            let _ = writeln!(s, "  Suggestions for exploring: {}", r.direction.text);
        }
        match r.delta {
            Some(d) => {
                let _ = writeln!(s, "Delta: {d:.4}");
            }
            None => {
                let _ = writeln!(s, "Delta: n/a");
            }
        }
        if let Some(reason) = r.termination {
            let label = serde_json::to_value(reason).expect("reason serializes");
            let _ = writeln!(
                s,
                "Terminated after iteration {}: {}",
                r.iteration,
                label.as_str().unwrap_or_default()
            );
        }
    }
    s
}

fn cmd_inspect(args: &InspectArgs) -> Result<i32, CliError> {
    let file = fs::File::open(&args.trajectory).map_err(|e| read_err(&args.trajectory, e))?;
    let records = read_trajectory(file).map_err(|e| match e {
        TrajectoryReadError::Io(source) => read_err(&args.trajectory, source),
        other => input_err(&args.trajectory, other.to_string()),
    })?;
    match args.format {
        Format::Text => print!("{}", render_trajectory_text(&records)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&records).expect("records serialize")),
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Refine(a) => cmd_refine(a),
        Command::Eval(EvalCommand::Paths(a)) => cmd_eval_paths(a),
        Command::Eval(EvalCommand::Retrieval(a)) => cmd_eval_retrieval(a),
        Command::Eval(EvalCommand::WinRate(a)) => cmd_eval_win_rate(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

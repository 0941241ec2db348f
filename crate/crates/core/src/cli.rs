//! The `cantor` command line. Progress goes to stderr; reports and answers to stdout.
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 backend error, 5 partial results.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backends::{
    BackendRequest, BackendSet, BackendSetupError, ResponseCache, SharedBackend, Transcript,
    TranscriptWriter,
};
use crate::datasets::{self, DatasetError};
use crate::domain::{ConfigError, QueryRecord, RunConfig, SubAnswerStatus, VisualLevel};
use crate::evaluation::{
    ablation_matrix, emit_report, render_json, render_markdown, score_run, visual_level_sweep, EvalError,
    ReportFormat, RunReport,
};
use crate::pipeline::{
    default_run_id, parallel_map_cancellable, read_json, run_batch, BatchOutcome, FailureKind, Pipeline,
    PipelineError, QueryOutcome, QueryTrace, RunManifest, RunStore, StoreError,
};
use crate::prompting::{PromptError, PromptSet, RenderedPrompt};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;
pub const EXIT_PARTIAL: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "cantor", version, about = "Multimodal chain-of-thought pipeline and evaluation harness")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Config override, e.g. `--set parallelism=4 --set decision_backend.model_id=gpt-4o`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an upstream dataset file into canonical JSONL.
    Import(ImportArgs),
    /// Run a backend command while appending every backend call to a transcript.
    Record {
        #[arg(long, value_name = "FILE")]
        transcript: PathBuf,
        #[command(subcommand)]
        command: BackendCommand,
    },
    /// Run a backend command answering every call from a transcript; no live calls.
    Replay {
        #[arg(long, value_name = "FILE")]
        transcript: PathBuf,
        #[command(subcommand)]
        command: BackendCommand,
    },
    /// Inspect stored traces.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Inspect or clear the response cache.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
        /// Cache directory; defaults to the configured one.
        #[arg(long, global = true, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
    #[command(flatten)]
    Backend(BackendCommand),
}

#[derive(Debug, Subcommand)]
pub enum BackendCommand {
    /// Generate rough or detailed captions for image records.
    Caption(CaptionArgs),
    /// Answer one record and store its trace.
    Run(RunArgs),
    /// Answer every record, store traces, and write report.{json,md,csv}.
    Eval(EvalArgs),
    /// Enable-only and disable-only ablation over every expert module.
    Ablate(AblateArgs),
    /// Baseline accuracy at each visual-information level.
    SweepVisual(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceKind {
    Scienceqa,
    Mathvista,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(value_enum)]
    pub kind: SourceKind,
    /// Upstream annotation file (problems.json / testmini.json).
    #[arg(long, value_name = "FILE")]
    pub source: PathBuf,
    /// Split to import; MathVista is always `testmini`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Image root directory.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecordSelection {
    /// Canonical JSONL file or directory of record files.
    #[arg(long, value_name = "PATH")]
    pub records: PathBuf,
    /// Keep records carrying this tag, e.g. `context=IMG`. Repeatable; all must match.
    #[arg(long = "tag", value_name = "FAMILY=VALUE")]
    pub tags: Vec<String>,
    /// Keep at most this many records (after tag filtering).
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Role {
    Decision,
    Expert,
    Synthesis,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaptionLevel {
    Rough,
    Detailed,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[command(flatten)]
    pub select: RecordSelection,
    /// Which configured binding generates the captions.
    #[arg(long, value_enum, default_value = "expert")]
    pub backend: Role,
    #[arg(long, value_enum)]
    pub level: CaptionLevel,
    /// Output JSONL with captions added.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub records: PathBuf,
    #[arg(long)]
    pub record_id: String,
    /// Directory holding run directories.
    #[arg(long, value_name = "DIR", default_value = "runs")]
    pub runs_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub select: RecordSelection,
    /// Run directory; defaults to `runs/<run id>`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run id written into the report; defaults to one derived from the config and record ids.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub select: RecordSelection,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub select: RecordSelection,
    /// Comma-separated levels: none, rough, detailed, image.
    #[arg(long, value_delimiter = ',', default_value = "none,rough,detailed,image")]
    pub levels: Vec<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TraceCommand {
    /// Print a trace stage by stage.
    Show { path: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    Stats,
    Clear,
}

/// A failed command: message for stderr plus exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<BackendSetupError> for CliError {
    fn from(e: BackendSetupError) -> Self {
        let code = match e {
            BackendSetupError::Cache(_) => EXIT_BACKEND,
            _ => EXIT_CONFIG,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::InvalidRecord { .. }
            | PipelineError::Prompt(PromptError::MissingCaption { .. } | PromptError::MissingImage { .. }) => EXIT_DATA,
            PipelineError::Prompt(_) => EXIT_CONFIG,
            PipelineError::Backend { .. } | PipelineError::Parse(_) => EXIT_BACKEND,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(p) => p.into(),
            other => CliError::new(EXIT_DATA, other.to_string()),
        }
    }
}

type CliResult = Result<u8, CliError>;

/// Entry point of the binary: parses `std::env::args`, installs the Ctrl-C handler, runs.
pub fn main() -> ExitCode {
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(EXIT_PARTIAL as i32);
        }
        eprintln!("interrupt: finishing in-flight queries; press Ctrl-C again to abort");
    }) {
        eprintln!("warning: cannot install Ctrl-C handler: {e}");
    }
    ExitCode::from(run_from(std::env::args_os(), &cancel))
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run_from<I, T>(args: I, cancel: &AtomicBool) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli, cancel) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli, cancel: &AtomicBool) -> CliResult {
    match cli.command {
        Command::Import(args) => import(args),
        Command::Trace { command: TraceCommand::Show { path } } => trace_show(&path),
        Command::Cache { command, dir } => {
            let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
            cache(command, dir.unwrap_or_else(|| config.cache.resolved_dir()))
        }
        Command::Backend(cmd) => {
            let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
            let backends = BackendSet::from_config(&config)?;
            dispatch(cmd, Ctx { config, backends, transcript: None, cancel })
        }
        Command::Record { transcript, command } => {
            let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
            let writer = Arc::new(TranscriptWriter::create(&transcript).map_err(|e| {
                CliError::new(EXIT_DATA, format!("cannot create transcript {}: {e}", transcript.display()))
            })?);
            let backends = BackendSet::from_config(&config)?.recording(writer.clone());
            let ctx = Ctx { config, backends, transcript: Some(transcript.clone()), cancel };
            let result = dispatch(command, ctx);
            let n = writer.finish().map_err(|e| CliError::new(EXIT_DATA, format!("{}: {e}", transcript.display())))?;
            eprintln!("recorded {n} backend call(s) to {}", transcript.display());
            result
        }
        Command::Replay { transcript, command } => {
            let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
            let loaded = Transcript::load(&transcript).map_err(|e| {
                CliError::new(EXIT_DATA, format!("cannot read transcript {}: {e}", transcript.display()))
            })?;
            let backends = BackendSet::replaying(Arc::new(loaded), &config);
            dispatch(command, Ctx { config, backends, transcript: Some(transcript), cancel })
        }
    }
}

struct Ctx<'a> {
    config: RunConfig,
    backends: BackendSet,
    transcript: Option<PathBuf>,
    cancel: &'a AtomicBool,
}

impl Ctx<'_> {
    fn prompts(&self) -> Result<PromptSet, CliError> {
        Ok(match &self.config.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::builtin(),
        })
    }
}

fn dispatch(cmd: BackendCommand, ctx: Ctx<'_>) -> CliResult {
    match cmd {
        BackendCommand::Caption(a) => caption(a, &ctx),
        BackendCommand::Run(a) => run_one(a, &ctx),
        BackendCommand::Eval(a) => eval(a, &ctx),
        BackendCommand::Ablate(a) => ablate(a, &ctx),
        BackendCommand::SweepVisual(a) => sweep(a, &ctx),
    }
}

fn import(args: ImportArgs) -> CliResult {
    let outcome = match args.kind {
        SourceKind::Scienceqa => datasets::import_scienceqa(&args.source, &args.split, args.images.as_deref())?,
        SourceKind::Mathvista => datasets::import_mathvista(&args.source, args.images.as_deref())?,
    };
    for w in &outcome.warnings {
        eprintln!("warning: {}: {}", w.id, w.message);
    }
    datasets::write_canonical(&args.out, &outcome.records)?;
    let with_image = outcome.records.iter().filter(|r| r.image().is_some()).count();
    eprintln!(
        "imported {} record(s) ({} with image) to {}",
        outcome.records.len(),
        with_image,
        args.out.display()
    );
    for (family, counts) in datasets::tag_counts(&outcome.records) {
        let parts: Vec<String> = counts.iter().map(|(v, n)| format!("{v}={n}")).collect();
        eprintln!("  {family}: {}", parts.join(" "));
    }
    Ok(EXIT_OK)
}

fn select_records(sel: &RecordSelection) -> Result<Vec<QueryRecord>, CliError> {
    let mut records = datasets::load_canonical(&sel.records)?;
    for raw in &sel.tags {
        let (family, value) = raw
            .split_once('=')
            .ok_or_else(|| CliError::new(EXIT_CONFIG, format!("invalid --tag `{raw}`: expected FAMILY=VALUE")))?;
        records.retain(|r| r.categories.has(family.trim(), value.trim()));
    }
    if let Some(n) = sel.limit {
        records.truncate(n);
    }
    if records.is_empty() {
        return Err(CliError::new(EXIT_DATA, "no records selected"));
    }
    Ok(records)
}

fn pick_backend(backends: &BackendSet, role: Role) -> &SharedBackend {
    match role {
        Role::Decision => &backends.decision,
        Role::Expert => &backends.expert,
        Role::Synthesis => &backends.synthesis,
    }
}

fn caption(args: CaptionArgs, ctx: &Ctx<'_>) -> CliResult {
    let prompts = ctx.prompts()?;
    let mut records = select_records(&args.select)?;
    let level = match args.level {
        CaptionLevel::Rough => VisualLevel::RoughCaption,
        CaptionLevel::Detailed => VisualLevel::DetailedCaption,
    };
    let text = prompts.caption_prompt(level).expect("caption level").to_string();
    let backend = pick_backend(&ctx.backends, args.backend);
    let binding = match args.backend {
        Role::Decision => &ctx.config.decision_backend,
        Role::Expert => &ctx.config.expert_backend,
        Role::Synthesis => &ctx.config.synthesis_backend,
    };
    let done = AtomicUsize::new(0);
    let total = records.len();
    let results = parallel_map_cancellable(&records, ctx.config.parallelism, ctx.cancel, |_, r| {
        let result = r.image().map(|image| {
            let prompt = RenderedPrompt { text: text.clone(), image: Some(image.clone()) };
            let request = BackendRequest::new(&binding.model_id, prompt, ctx.config.sampling.clone());
            backend.complete(&request).map(|resp| resp.text.trim().to_string())
        });
        let n = done.fetch_add(1, Ordering::SeqCst) + 1;
        eprintln!("[{n}/{total}] {}", r.id);
        result
    });
    let interrupted = results.iter().any(Option::is_none);
    let mut failures = Vec::new();
    let mut skipped = 0;
    for (record, result) in records.iter_mut().zip(results) {
        match result {
            Some(Some(Ok(caption))) => match level {
                VisualLevel::RoughCaption => record.captions.rough = Some(caption),
                _ => record.captions.detailed = Some(caption),
            },
            Some(Some(Err(e))) => failures.push((record.id.clone(), e)),
            Some(None) => skipped += 1,
            None => {}
        }
    }
    datasets::write_canonical(&args.out, &records)?;
    eprintln!("wrote {} record(s) to {} ({skipped} without image skipped)", records.len(), args.out.display());
    for (id, e) in &failures {
        eprintln!("caption failed for {id}: {e}");
    }
    Ok(if interrupted {
        EXIT_PARTIAL
    } else if !failures.is_empty() {
        if failures.len() + skipped == records.len() {
            EXIT_BACKEND
        } else {
            EXIT_PARTIAL
        }
    } else {
        EXIT_OK
    })
}

fn write_manifest(
    store: &RunStore,
    run_id: &str,
    config: &RunConfig,
    prompts: &PromptSet,
    records: &[QueryRecord],
    outcome: &BatchOutcome,
    ctx: &Ctx<'_>,
) -> Result<RunManifest, CliError> {
    let manifest = RunManifest {
        run_id: run_id.to_string(),
        config: config.clone(),
        config_digest: config.digest(),
        prompt_digests: prompts.digests(),
        dataset: Some(config.dataset.key().to_string()),
        record_ids: records.iter().map(|r| r.id.clone()).collect(),
        completed: outcome.traces().map(|t| t.record_id.clone()).collect(),
        failures: outcome.failures().map(|(id, f)| (id.to_string(), f.clone())).collect(),
        interrupted: outcome.interrupted,
        transcript: ctx.transcript.as_ref().map(|p| p.display().to_string()),
    };
    store.write_manifest(&manifest)?;
    Ok(manifest)
}

fn run_one(args: RunArgs, ctx: &Ctx<'_>) -> CliResult {
    let records = datasets::load_canonical(&args.records)?;
    let record = records
        .iter()
        .find(|r| r.id == args.record_id)
        .ok_or_else(|| CliError::new(EXIT_DATA, format!("unknown record id `{}`", args.record_id)))?;
    let pipeline = Pipeline::new(ctx.config.clone(), ctx.prompts()?, ctx.backends.clone())?;
    let trace = pipeline.run_query(record)?;
    let run_id = default_run_id(&ctx.config, std::slice::from_ref(&record.id));
    let store = RunStore::create(&args.runs_dir, &run_id)?;
    store.write_trace(&trace)?;
    let answer = &trace.answer;
    let shown = match (answer.choice_index, &answer.free_form) {
        (Some(i), _) => format!("({}) {}", (b'A' + i as u8) as char, record.options.get(i).map_or("", String::as_str)),
        (None, Some(v)) => serde_json::to_string(v).expect("value serializes"),
        (None, None) => format!("unscored: {}", answer.extraction_error.as_deref().unwrap_or("no answer")),
    };
    println!("answer: {shown}");
    println!("verdict: {:?}", trace.verdict);
    println!("trace: {}", store.trace_path(&record.id).display());
    Ok(EXIT_OK)
}

/// Failures decide the exit code: replay misses and all-backend failures are backend errors.
fn outcome_code(outcome: &BatchOutcome) -> u8 {
    if outcome.interrupted {
        return EXIT_PARTIAL;
    }
    let failures: Vec<_> = outcome.failures().collect();
    if failures.is_empty() {
        return EXIT_OK;
    }
    for (id, f) in &failures {
        eprintln!("failed {id}: {}", f.message);
    }
    let backend = |k: FailureKind| matches!(k, FailureKind::Backend | FailureKind::ReplayMiss | FailureKind::Parse);
    if failures.iter().any(|(_, f)| f.kind == FailureKind::ReplayMiss)
        || (outcome.traces().next().is_none() && failures.iter().all(|(_, f)| backend(f.kind)))
    {
        EXIT_BACKEND
    } else {
        EXIT_PARTIAL
    }
}

/// Per-label `[label n/total]` progress lines on stderr.
fn progress(total: usize) -> impl Fn(&str, &QueryOutcome) + Sync {
    let done = std::sync::Mutex::new(std::collections::HashMap::<String, usize>::new());
    move |label: &str, o: &QueryOutcome| {
        let n = {
            let mut done = done.lock().expect("progress lock");
            let n = done.entry(label.to_string()).or_default();
            *n += 1;
            *n
        };
        let status = match &o.result {
            Ok(t) => format!("{:?}", t.verdict).to_lowercase(),
            Err(f) => format!("failed ({})", serde_json::to_value(f.kind).expect("kind serializes").as_str().unwrap_or("")),
        };
        eprintln!("[{label}{n}/{total}] {}: {status}", o.record_id);
    }
}

fn out_dir(out: Option<PathBuf>, config: &RunConfig, records: &[QueryRecord], prefix: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        PathBuf::from("runs").join(format!("{prefix}{}", default_run_id(config, &ids)))
    })
}

fn store_at(dir: &Path) -> Result<RunStore, CliError> {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run");
    let parent = dir.parent().unwrap_or(Path::new("."));
    Ok(RunStore::create(parent, name)?)
}

/// Scores whatever completed and writes the three report files.
fn finish_run(store: &RunStore, run_id: &str, records: &[QueryRecord], outcome: &BatchOutcome) -> Result<RunReport, CliError> {
    let traces: Vec<QueryTrace> = outcome.traces().cloned().collect();
    let done: Vec<QueryRecord> = records
        .iter()
        .filter(|r| traces.iter().any(|t| t.record_id == r.id))
        .cloned()
        .collect();
    let report = score_run(run_id, &traces, &done)?;
    for f in ReportFormat::ALL {
        emit_report(&report, f, store.dir())?;
    }
    Ok(report)
}

fn eval(args: EvalArgs, ctx: &Ctx<'_>) -> CliResult {
    let records = select_records(&args.select)?;
    let prompts = ctx.prompts()?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let run_id = args.run_id.unwrap_or_else(|| default_run_id(&ctx.config, &ids));
    let dir = args.out.unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    let store = store_at(&dir)?;
    let pipeline = Pipeline::new(ctx.config.clone(), prompts.clone(), ctx.backends.clone())?;
    let show = progress(records.len());
    let write_errors = std::sync::Mutex::new(Vec::new());
    let outcome = run_batch(&pipeline, &records, ctx.cancel, &|o| {
        if let Ok(t) = &o.result {
            if let Err(e) = store.write_trace(t) {
                write_errors.lock().expect("lock").push(e.to_string());
            }
        }
        show("", o);
    });
    if let Some(e) = write_errors.into_inner().expect("lock").into_iter().next() {
        return Err(CliError::new(EXIT_DATA, e));
    }
    write_manifest(&store, &run_id, &ctx.config, &prompts, &records, &outcome, ctx)?;
    let report = finish_run(&store, &run_id, &records, &outcome)?;
    print!("{}", render_markdown(&report));
    eprintln!("run directory: {}", store.dir().display());
    Ok(outcome_code(&outcome))
}

fn ablate(args: AblateArgs, ctx: &Ctx<'_>) -> CliResult {
    let records = select_records(&args.select)?;
    let prompts = ctx.prompts()?;
    let dir = out_dir(args.out, &ctx.config, &records, "ablation-");
    let show = progress(records.len());
    let run = ablation_matrix(&records, &ctx.config, &prompts, &ctx.backends, ctx.cancel, &|mode, o| {
        show(&format!("{} ", mode.key()), o)
    })?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::new(EXIT_DATA, format!("{}: {e}", dir.display())))?;
    let mut code = EXIT_OK;
    for mode_run in &run.runs {
        let store = RunStore::create(&dir, &mode_run.mode.key())?;
        for t in mode_run.outcome.traces() {
            store.write_trace(t)?;
        }
        write_manifest(&store, &mode_run.mode.key(), &mode_run.config, &prompts, &records, &mode_run.outcome, ctx)?;
        if let Some(report) = &mode_run.report {
            for f in ReportFormat::ALL {
                emit_report(report, f, store.dir())?;
            }
        } else {
            code = outcome_code(&mode_run.outcome);
        }
    }
    let table = run.matrix.to_markdown();
    write(&dir.join("ablation.json"), &render_json(&run.matrix))?;
    write(&dir.join("ablation.md"), &table)?;
    print!("{table}");
    if let Some(reason) = &run.aborted {
        eprintln!("ablation stopped early: {reason}");
        if code == EXIT_OK {
            code = EXIT_PARTIAL;
        }
    }
    eprintln!("ablation directory: {}", dir.display());
    Ok(code)
}

fn sweep(args: SweepArgs, ctx: &Ctx<'_>) -> CliResult {
    let levels = args
        .levels
        .iter()
        .map(|raw| VisualLevel::parse(raw).ok_or_else(|| CliError::new(EXIT_CONFIG, format!("unknown visual level `{raw}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let records = select_records(&args.select)?;
    let prompts = ctx.prompts()?;
    let dir = out_dir(args.out, &ctx.config, &records, "sweep-");
    let show = progress(records.len());
    let (table, traces) = visual_level_sweep(&records, &levels, &ctx.config, &prompts, &ctx.backends, ctx.cancel, &|level, o| {
        show(&format!("{} ", level.key()), o)
    })?;
    for (level, traces) in &traces {
        let store = RunStore::create(&dir, level.key())?;
        for t in traces {
            store.write_trace(t)?;
        }
    }
    let md = table.to_markdown();
    write(&dir.join("sweep.json"), &render_json(&table))?;
    write(&dir.join("sweep.md"), &md)?;
    print!("{md}");
    for row in &table.rows {
        if !row.skipped.is_empty() {
            eprintln!("{}: {} record(s) skipped for missing visual input", row.level, row.skipped.len());
        }
    }
    eprintln!("sweep directory: {}", dir.display());
    let failed = table.rows.iter().any(|r| !r.failed.is_empty());
    Ok(if ctx.cancel.load(Ordering::SeqCst) || table.rows.len() < levels.len() || failed {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn trace_show(path: &Path) -> CliResult {
    let trace: QueryTrace = read_json(path)?;
    print!("{}", format_trace(&trace));
    Ok(EXIT_OK)
}

/// Human-readable, stage-by-stage rendering of a trace.
pub fn format_trace(t: &QueryTrace) -> String {
    let mut out = format!(
        "record {}  mode {:?}  verdict {:?}\nconfig {}\ndigest {}\n",
        t.record_id,
        t.mode,
        t.verdict,
        t.config_digest,
        t.digest()
    );
    if let Some(d) = &t.decision {
        out.push_str(&format!(
            "\n== decision ({} attempt(s), {} ms)\nprompt sha256 {}\n",
            d.responses.len(),
            d.latency_ms,
            d.prompt_sha256
        ));
        out.push_str(&format!("principle analysis: {}\n", d.decision.principle_analysis));
        for s in &d.decision.module_selections {
            out.push_str(&format!("selected {}: {}\n", s.module.display_name(), s.reason));
        }
        for w in &d.diagnostics.warnings {
            out.push_str(&format!("parser warning: {}\n", w.message));
        }
    }
    if !t.experts.is_empty() {
        out.push_str("\n== experts\n");
    }
    for (i, e) in t.experts.iter().enumerate() {
        let status = match e.answer.status {
            SubAnswerStatus::Ok => format!("ok, {} ms", e.latency_ms),
            SubAnswerStatus::BackendError => format!("error: {}", e.answer.error.as_deref().unwrap_or("")),
            SubAnswerStatus::SkippedDisabledModule => "skipped (module disabled)".to_string(),
        };
        out.push_str(&format!(
            "{}. [{}: {}] ({status})\n",
            i + 1,
            e.answer.sub_task.module.display_name(),
            e.answer.sub_task.instruction
        ));
        if e.answer.is_ok() {
            out.push_str(&format!("   -> {}\n", e.answer.text.trim()));
        }
    }
    out.push_str(&format!(
        "\n== synthesis ({} ms)\nprompt sha256 {}\n{}\n",
        t.synthesis.latency_ms,
        t.synthesis.prompt_sha256,
        t.synthesis.response.trim()
    ));
    out.push_str("\n== answer\n");
    match (&t.answer.choice_index, &t.answer.free_form, &t.answer.extraction_error) {
        (Some(i), _, _) => out.push_str(&format!("choice ({})\n", (b'A' + *i as u8) as char)),
        (None, Some(v), _) => out.push_str(&format!("{}\n", serde_json::to_string(v).expect("value serializes"))),
        (None, None, e) => out.push_str(&format!("unscored: {}\n", e.as_deref().unwrap_or("no answer"))),
    }
    out
}

fn cache(command: CacheCommand, dir: PathBuf) -> CliResult {
    let cache = ResponseCache::open(&dir).map_err(|e| CliError::new(EXIT_DATA, format!("{}: {e}", dir.display())))?;
    match command {
        CacheCommand::Stats => {
            let s = cache.stats().map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            println!("dir: {}\nentries: {}\nshards: {}\nbytes: {}", dir.display(), s.entries, s.shards, s.bytes);
        }
        CacheCommand::Clear => {
            let n = cache.clear().map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            println!("removed {n} entr{}", if n == 1 { "y" } else { "ies" });
        }
    }
    Ok(EXIT_OK)
}

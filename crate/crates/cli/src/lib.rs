//! The `argmine` command line.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 backend failure.
//! Diagnostics go to stderr and name the offending flag.

pub mod config;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use argmine_client::OpenAiClient;
use argmine_core::backend::{Embedder, HashingEmbedder};
use argmine_core::data::{
    generate_synthetic, load_corpus, save_corpus, CorpusFile, CorpusFormat, SchemaMapping, SynthSpec,
};
use argmine_core::eval::{
    evaluate_detection, evaluate_extraction, evaluate_stance, merge_annotations, read_annotations_csv,
    read_keyfile_csv, read_sheet_csv, stratified_sample, write_keyfile_csv, write_sheet_csv, ClassKey, EvalReport,
    ReportGrid,
};
use argmine_core::pipeline::{
    read_records, run_batch, run_batch_to_file, AnalysisRecord, BatchSummary, JobSpec, JsonlSink, OutputFormat,
    TopicSource,
};
use argmine_core::prompt::{parse_cte_response, parse_detection_response, parse_stance_response, TemplateSet};
use argmine_core::{ArgumentType, Backend, Instance, MockBackend, PromptBuilder, Style, Task, Variant};
use argmine_server::{AppState, LabelResponse, TopicResponse};
use clap::{Args, Parser, Subcommand};

use crate::config::{BackendKind, Config};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Input(String),
    Backend(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Backend(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
        }
    }
}

/// Prefixes an error with the flag it came from.
fn at<E: fmt::Display>(flag: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Input(format!("{flag}: {e}"))
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "argmine", version, about = "Argument detection, claim topic extraction and stance classification")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Backend to call; overrides `[backend] kind`.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Endpoint base URL for the openai backend, e.g. http://localhost:8000/v1.
    #[arg(long, global = true, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Model id for the openai backend.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Directory of prompt template overrides.
    #[arg(long, global = true, value_name = "DIR")]
    pub templates: Option<PathBuf>,
    /// More logging on stderr (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Argument detection for one text or a corpus.
    Detect(SingleTaskArgs),
    /// Claim topic extraction for one text or a corpus.
    Extract(SingleTaskArgs),
    /// Stance toward a topic for one text or a corpus.
    Stance(SingleTaskArgs),
    /// Run the pipeline over a corpus and write one record per instance.
    Analyze(AnalyzeArgs),
    /// Score a results file against a gold corpus.
    Eval(EvalArgs),
    /// Results grid: F1 per (model, variant) and dataset.
    Bench(BenchArgs),
    /// Draw a class-balanced annotation sheet and its keyfile.
    Sample(SampleArgs),
    /// Fold a completed annotation sheet back into a corpus.
    Merge(MergeArgs),
    /// Generate a labeled synthetic corpus.
    Gen(GenArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus file (.csv or .jsonl).
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Column layout preset: generic, ukp, ibm-arg, debate, gpt-hq, cte.
    #[arg(long)]
    pub preset: Option<String>,
    /// Column override, FIELD=COLUMN. Repeatable.
    #[arg(long = "map", value_name = "FIELD=COLUMN")]
    pub map: Vec<String>,
    /// Input format when the extension does not tell.
    #[arg(long, value_name = "csv|jsonl")]
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Prompt variant.
    #[arg(long, default_value = "atn", value_name = "atn|no-atn")]
    pub variant: Variant,
    /// Where stance takes its topic from.
    #[arg(long, default_value = "instance", value_name = "instance|extract")]
    pub topic_source: TopicSource,
    /// Instances analyzed concurrently.
    #[arg(long, default_value_t = 4, value_name = "N")]
    pub concurrency: usize,
    /// Run extraction and stance even when detection says NoArgument.
    #[arg(long)]
    pub ungated: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Results file; `.csv` writes CSV, anything else JSON lines.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Continue an interrupted run from its checkpoint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SingleTaskArgs {
    /// A single text; the answer is printed as JSON.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    /// Topic for stance on a single text.
    #[arg(long)]
    pub topic: Option<String>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Comma-separated tasks.
    #[arg(long, value_delimiter = ',', default_value = "detect,extract,stance")]
    pub tasks: Vec<Task>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// detect, extract or stance.
    #[arg(long)]
    pub task: Task,
    /// Results file from `analyze`.
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// Gold corpus via --in.
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Dataset name shown in the report.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Also write the report as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// detect, extract or stance.
    #[arg(long)]
    pub task: Task,
    /// NAME=PATH or NAME=PATH@PRESET. Repeatable; one grid column each.
    #[arg(long = "dataset", value_name = "NAME=PATH[@PRESET]", required = true)]
    pub datasets: Vec<String>,
    /// Comma-separated variants, one grid row each per model.
    #[arg(long, value_delimiter = ',', default_value = "atn,no-atn")]
    pub variants: Vec<Variant>,
    /// Comma-separated model ids for the openai backend (default: --model).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 4, value_name = "N")]
    pub concurrency: usize,
    /// Also write the grid as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Sheet size.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label to stratify on: argument or stance.
    #[arg(long, default_value = "stance")]
    pub key: ClassKey,
    /// Sheet for annotators (sheet_id,text,topic).
    #[arg(long, value_name = "PATH")]
    pub sheet: PathBuf,
    /// Mapping from sheet ids to instance ids.
    #[arg(long, value_name = "PATH")]
    pub keyfile: PathBuf,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// The corpus the sheet was drawn from, via --in.
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_name = "PATH")]
    pub sheet: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub keyfile: PathBuf,
    /// Annotations: sheet_id,label[,topic].
    #[arg(long, value_name = "PATH")]
    pub annotations: PathBuf,
    #[arg(long, default_value = "stance")]
    pub key: ClassKey,
    /// Relabeled corpus (.csv or .jsonl).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Full generation spec as JSON; the flags below are ignored when given.
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// Comma-separated topics.
    #[arg(long, value_delimiter = ',')]
    pub topics: Vec<String>,
    /// Arguments per (type, style, topic) cell.
    #[arg(long, default_value_t = 1)]
    pub per_cell: usize,
    /// Comma-separated argument types (default: all).
    #[arg(long, value_delimiter = ',')]
    pub types: Vec<ArgumentType>,
    /// Comma-separated styles (default: all).
    #[arg(long, value_delimiter = ',')]
    pub styles: Vec<Style>,
    /// Sentence count bounds, MIN-MAX.
    #[arg(long, default_value = "1-3", value_name = "MIN-MAX")]
    pub sentences: String,
    /// Share of non-arguments in the output, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub non_argument_fraction: f64,
    #[arg(long, default_value_t = 4, value_name = "N")]
    pub concurrency: usize,
    /// Output corpus (.csv or .jsonl).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address (default 127.0.0.1:8080).
    #[arg(long)]
    pub addr: Option<String>,
    /// Job store directory (default ./argmine-jobs).
    #[arg(long, value_name = "DIR")]
    pub job_dir: Option<PathBuf>,
    /// Jobs allowed to wait in the queue (default 64).
    #[arg(long, value_name = "N")]
    pub queue_capacity: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return 1;
        }
    };
    match rt.block_on(execute(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Settings shared by every command.
struct Context {
    config: Config,
    backend_flag: Option<BackendKind>,
    endpoint: Option<String>,
    model: Option<String>,
    templates: Option<PathBuf>,
}

/// A backend together with the embedder used for topic scoring.
#[derive(Clone)]
struct Engine {
    backend: Arc<dyn Backend>,
    embedder: Arc<dyn Embedder>,
}

impl Context {
    fn prompts(&self) -> CliResult<PromptBuilder> {
        let dir = self.templates.as_ref().or(self.config.prompts.template_dir.as_ref());
        match dir {
            None => Ok(PromptBuilder::default()),
            Some(d) => TemplateSet::from_dir(d).map(PromptBuilder::new).map_err(at("--templates")),
        }
    }

    fn kind(&self) -> CliResult<BackendKind> {
        if let Some(k) = self.backend_flag {
            return Ok(k);
        }
        if let Some(k) = self.config.backend_kind()? {
            return Ok(k);
        }
        if self.endpoint.is_some() {
            return Ok(BackendKind::Openai);
        }
        Err(CliError::input("--backend: no backend configured (pass --backend mock|openai or --config)"))
    }

    fn engine(&self, model: Option<&str>) -> CliResult<Engine> {
        match self.kind()? {
            BackendKind::Mock => Ok(Engine {
                backend: Arc::new(MockBackend::new()),
                embedder: Arc::new(HashingEmbedder::default()),
            }),
            BackendKind::Openai => {
                let cfg = self
                    .config
                    .backend_config(self.endpoint.as_deref(), model.or(self.model.as_deref()))?;
                let client = Arc::new(OpenAiClient::new(cfg).map_err(at("--config"))?);
                Ok(Engine { backend: client.clone(), embedder: client })
            }
        }
    }
}

async fn execute(cli: Cli) -> CliResult {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = Context {
        config,
        backend_flag: cli.backend,
        endpoint: cli.endpoint,
        model: cli.model,
        templates: cli.templates,
    };
    match cli.command {
        Command::Detect(a) => single_task(&ctx, Task::Detect, a).await,
        Command::Extract(a) => single_task(&ctx, Task::Extract, a).await,
        Command::Stance(a) => single_task(&ctx, Task::Stance, a).await,
        Command::Analyze(a) => analyze_cmd(&ctx, a).await,
        Command::Eval(a) => eval_cmd(&ctx, a).await,
        Command::Bench(a) => bench_cmd(&ctx, a).await,
        Command::Sample(a) => sample_cmd(a),
        Command::Merge(a) => merge_cmd(a),
        Command::Gen(a) => gen_cmd(&ctx, a).await,
        Command::Serve(a) => serve_cmd(&ctx, a).await,
    }
}

fn schema(corpus: &CorpusArgs) -> CliResult<SchemaMapping> {
    let base = match &corpus.preset {
        Some(p) => SchemaMapping::preset(p).map_err(at("--preset"))?,
        None => SchemaMapping::generic(),
    };
    base.with_overrides(&corpus.map).map_err(at("--map"))
}

fn load(corpus: &CorpusArgs) -> CliResult<Vec<Instance>> {
    let path = corpus.input.as_ref().ok_or_else(|| CliError::input("--in: a corpus file is required"))?;
    let mut file = CorpusFile::new(path).with_schema(schema(corpus)?);
    if let Some(f) = corpus.format {
        file = file.with_format(f);
    }
    let report = load_corpus(&file).map_err(at("--in"))?;
    for r in &report.rejects {
        tracing::warn!(line = r.line, reason = %r.reason, "rejected row");
    }
    if !report.rejects.is_empty() {
        eprintln!("{}: {} row(s) rejected", path.display(), report.rejects.len());
    }
    if report.instances.is_empty() {
        return Err(CliError::input(format!("--in: {} has no valid instances", path.display())));
    }
    Ok(report.instances)
}

fn job_spec(tasks: impl IntoIterator<Item = Task>, run: &RunArgs) -> CliResult<JobSpec> {
    let spec = JobSpec {
        tasks: tasks.into_iter().collect::<BTreeSet<_>>(),
        variant: run.variant,
        topic_source: run.topic_source,
        concurrency: run.concurrency,
        ungated: run.ungated,
    };
    if spec.concurrency == 0 {
        return Err(CliError::input("--concurrency: must be at least 1"));
    }
    if spec.tasks.contains(&Task::Generate) {
        return Err(CliError::input("--tasks: generate is not a pipeline task (use `argmine gen`)"));
    }
    spec.validate().map_err(at("--tasks"))?;
    Ok(spec)
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| CliError::input(format!("stdout: {e}")))?;
    writeln!(out).map_err(|e| CliError::input(format!("stdout: {e}")))
}

async fn single_task(ctx: &Context, task: Task, a: SingleTaskArgs) -> CliResult {
    let Some(text) = a.text else {
        return batch(ctx, [task], &a.corpus, &a.run, &a.output).await;
    };
    if text.trim().is_empty() {
        return Err(CliError::input("--text: must not be empty"));
    }
    let prompts = ctx.prompts()?;
    let engine = ctx.engine(None)?;
    let prompt = match task {
        Task::Detect => prompts.build_detection_prompt(&text, a.run.variant),
        Task::Extract => prompts.build_cte_prompt(&text),
        _ => {
            let topic = a.topic.as_deref().ok_or_else(|| CliError::input("--topic: stance on --text needs a topic"))?;
            prompts.build_stance_prompt(&text, topic, a.run.variant)
        }
    }
    .map_err(at("--text"))?;
    let raw = engine.backend.complete(&prompt).await.map_err(|e| CliError::Backend(e.to_string()))?;
    match task {
        Task::Detect => {
            let o = parse_detection_response(&raw);
            print_json(&LabelResponse { label: o.label.name().into(), confidence_basis: o.confidence_basis, raw })
        }
        Task::Extract => {
            let o = parse_cte_response(&raw);
            print_json(&TopicResponse { topic: o.label.value().into(), confidence_basis: o.confidence_basis, raw })
        }
        _ => {
            let o = parse_stance_response(&raw);
            print_json(&LabelResponse { label: o.label.name().into(), confidence_basis: o.confidence_basis, raw })
        }
    }
}

async fn analyze_cmd(ctx: &Context, a: AnalyzeArgs) -> CliResult {
    batch(ctx, a.tasks, &a.corpus, &a.run, &a.output).await
}

async fn batch(
    ctx: &Context,
    tasks: impl IntoIterator<Item = Task>,
    corpus: &CorpusArgs,
    run: &RunArgs,
    output: &OutputArgs,
) -> CliResult {
    let spec = job_spec(tasks, run)?;
    let out = output.out.as_ref().ok_or_else(|| CliError::input("--out: a results file is required"))?;
    let instances = load(corpus)?;
    spec.validate_for(&instances).map_err(at("--topic-source"))?;
    let prompts = ctx.prompts()?;
    let engine = ctx.engine(None)?;
    let summary = run_batch_to_file(
        engine.backend.as_ref(),
        &prompts,
        &instances,
        &spec,
        out,
        OutputFormat::from_path(out),
        output.resume,
    )
    .await
    .map_err(at("--out"))?;
    report_summary(out, &summary)
}

fn report_summary(out: &Path, s: &BatchSummary) -> CliResult {
    eprintln!(
        "{}: {} record(s) written ({} complete, {} partial, {} failed{})",
        out.display(),
        s.total + s.skipped,
        s.succeeded,
        s.partial,
        s.failed,
        if s.skipped > 0 { format!(", {} resumed from checkpoint", s.skipped) } else { String::new() },
    );
    if s.partial + s.failed > 0 {
        return Err(CliError::Backend(format!(
            "{} record(s) have task errors; see the `errors` field in {}",
            s.partial + s.failed,
            out.display()
        )));
    }
    Ok(())
}

async fn eval_cmd(ctx: &Context, a: EvalArgs) -> CliResult {
    let records = read_records(&a.predictions).map_err(at("--predictions"))?;
    let gold = load(&a.corpus)?;
    let report = match a.task {
        Task::Detect => evaluate_detection(&records, &gold),
        Task::Stance => evaluate_stance(&records, &gold),
        Task::Extract => {
            let engine = ctx.engine(None)?;
            evaluate_extraction(&records, &gold, engine.embedder.as_ref()).await
        }
        Task::Generate => return Err(CliError::input("--task: generate cannot be evaluated")),
    }
    .map_err(at("--predictions"))?;
    let report = match a.dataset {
        Some(d) => report.with_dataset(d),
        None => report,
    };
    if let Some(path) = &a.json {
        std::fs::write(path, report.to_json()).map_err(at("--json"))?;
    }
    print!("{}", report.render_text());
    Ok(())
}

struct Dataset {
    name: String,
    corpus: CorpusArgs,
}

fn parse_dataset(s: &str) -> CliResult<Dataset> {
    let (name, rest) = s
        .split_once('=')
        .filter(|(n, r)| !n.trim().is_empty() && !r.is_empty())
        .ok_or_else(|| CliError::input(format!("--dataset: expected NAME=PATH[@PRESET], got '{s}'")))?;
    let (path, preset) = match rest.rsplit_once('@') {
        Some((p, preset)) => (p, Some(preset.to_string())),
        None => (rest, None),
    };
    Ok(Dataset {
        name: name.trim().to_string(),
        corpus: CorpusArgs { input: Some(path.into()), preset, map: Vec::new(), format: None },
    })
}

async fn score(task: Task, engine: &Engine, records: &[AnalysisRecord], gold: &[Instance]) -> CliResult<EvalReport> {
    match task {
        Task::Detect => evaluate_detection(records, gold),
        Task::Stance => evaluate_stance(records, gold),
        _ => evaluate_extraction(records, gold, engine.embedder.as_ref()).await,
    }
    .map_err(at("--dataset"))
}

async fn bench_cmd(ctx: &Context, a: BenchArgs) -> CliResult {
    if a.task == Task::Generate {
        return Err(CliError::input("--task: generate cannot be benchmarked"));
    }
    let datasets: Vec<Dataset> = a.datasets.iter().map(|d| parse_dataset(d)).collect::<CliResult<_>>()?;
    let corpora: Vec<Vec<Instance>> = datasets.iter().map(|d| load(&d.corpus)).collect::<CliResult<_>>()?;
    let prompts = ctx.prompts()?;
    let engines: Vec<Engine> = if a.models.is_empty() {
        vec![ctx.engine(None)?]
    } else {
        if ctx.kind()? != BackendKind::Openai {
            return Err(CliError::input("--models: only meaningful with the openai backend"));
        }
        a.models.iter().map(|m| ctx.engine(Some(m))).collect::<CliResult<_>>()?
    };

    let mut grid = ReportGrid::new(a.task, datasets.iter().map(|d| d.name.clone()));
    for engine in &engines {
        let model = engine.backend.name();
        for &variant in &a.variants {
            let run = RunArgs {
                variant,
                topic_source: TopicSource::FromInstance,
                concurrency: a.concurrency,
                ungated: true,
            };
            let spec = job_spec([a.task], &run)?;
            for (d, corpus) in datasets.iter().zip(&corpora) {
                let mut sink = JsonlSink::new(Vec::new());
                let summary = run_batch(engine.backend.as_ref(), &prompts, corpus, &spec, &mut sink)
                    .await
                    .map_err(|e| CliError::input(format!("--dataset {}: {e}", d.name)))?;
                if summary.failed == summary.total {
                    return Err(CliError::Backend(format!("{model} failed on every instance of {}", d.name)));
                }
                let records = parse_records(&sink.into_inner())?;
                let report = score(a.task, engine, &records, corpus).await?;
                tracing::info!(%model, %variant, dataset = %d.name, f1 = report.f1, "cell done");
                grid.set(&model, variant, &d.name, report.f1);
            }
        }
    }
    if let Some(path) = &a.json {
        let body = serde_json::to_string_pretty(&grid).expect("grid serializes");
        std::fs::write(path, body).map_err(at("--json"))?;
    }
    print!("{}", grid.render_table());
    Ok(())
}

fn parse_records(bytes: &[u8]) -> CliResult<Vec<AnalysisRecord>> {
    bytes
        .split(|b| *b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).map_err(|e| CliError::input(format!("internal record: {e}"))))
        .collect()
}

fn open(path: &Path, flag: &'static str) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::input(format!("{flag} {}: {e}", path.display())))
}

fn create(path: &Path, flag: &'static str) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::input(format!("{flag} {}: {e}", path.display())))
}

fn sample_cmd(a: SampleArgs) -> CliResult {
    let corpus = load(&a.corpus)?;
    let sheet = stratified_sample(&corpus, a.n, a.seed, a.key).map_err(at("--n"))?;
    write_sheet_csv(&sheet.rows, create(&a.sheet, "--sheet")?).map_err(at("--sheet"))?;
    write_keyfile_csv(&sheet.key, create(&a.keyfile, "--keyfile")?).map_err(at("--keyfile"))?;
    eprintln!("{}: {} row(s)", a.sheet.display(), sheet.rows.len());
    Ok(())
}

fn merge_cmd(a: MergeArgs) -> CliResult {
    let corpus = load(&a.corpus)?;
    let sheet = read_sheet_csv(open(&a.sheet, "--sheet")?).map_err(at("--sheet"))?;
    let key = read_keyfile_csv(open(&a.keyfile, "--keyfile")?).map_err(at("--keyfile"))?;
    let ann = read_annotations_csv(open(&a.annotations, "--annotations")?).map_err(at("--annotations"))?;
    let merged = merge_annotations(&sheet, &key, &corpus, &ann, a.key).map_err(at("--annotations"))?;
    save_corpus(&merged, &a.out, CorpusFormat::from_path(&a.out)).map_err(at("--out"))?;
    eprintln!("{}: {} instance(s)", a.out.display(), merged.len());
    Ok(())
}

fn parse_range(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::input(format!("--sentences: expected MIN-MAX, got '{s}'"));
    let (lo, hi) = match s.split_once('-') {
        Some((lo, hi)) => (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    Ok((lo, hi))
}

async fn gen_cmd(ctx: &Context, a: GenArgs) -> CliResult {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(at("--spec"))?;
            serde_json::from_str::<SynthSpec>(&text).map_err(at("--spec"))?
        }
        None => {
            let mut s = SynthSpec::new(a.topics.iter().map(|t| t.trim().to_string()), a.per_cell);
            if !a.types.is_empty() {
                s.types = a.types.clone();
            }
            if !a.styles.is_empty() {
                s.styles = a.styles.clone();
            }
            s.sentence_range = parse_range(&a.sentences)?;
            s.non_argument_fraction = a.non_argument_fraction;
            s.concurrency = a.concurrency;
            s
        }
    };
    let flag = if a.spec.is_some() { "--spec" } else { "--topics" };
    spec.validate().map_err(at(flag))?;
    let prompts = ctx.prompts()?;
    let engine = ctx.engine(None)?;
    let report = generate_synthetic(engine.backend.as_ref(), &prompts, &spec).await.map_err(at(flag))?;
    save_corpus(&report.instances, &a.out, CorpusFormat::from_path(&a.out)).map_err(at("--out"))?;
    eprintln!("{}: {} instance(s), {} failed cell(s)", a.out.display(), report.instances.len(), report.failures.len());
    for f in &report.failures {
        eprintln!("  {}: {}", f.id, f.error);
    }
    if !report.failures.is_empty() {
        return Err(CliError::Backend(format!("{} generation call(s) failed", report.failures.len())));
    }
    Ok(())
}

async fn serve_cmd(ctx: &Context, a: ServeArgs) -> CliResult {
    let server = &ctx.config.server;
    let addr = a.addr.or_else(|| server.addr.clone()).unwrap_or_else(|| "127.0.0.1:8080".into());
    let job_dir = a.job_dir.or_else(|| server.job_dir.clone()).unwrap_or_else(|| PathBuf::from("argmine-jobs"));
    let capacity = a.queue_capacity.or(server.queue_capacity).unwrap_or(64);
    let engine = ctx.engine(None)?;
    let state = AppState::start(engine.backend, Arc::new(ctx.prompts()?), &job_dir, capacity).map_err(at("--job-dir"))?;
    eprintln!("serving on http://{addr} (jobs in {})", job_dir.display());
    argmine_server::serve(&addr, state).await.map_err(at("--addr"))
}

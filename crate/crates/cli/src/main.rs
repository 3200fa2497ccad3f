//! Batch front end for the evaluation pipeline. Every command reads and
//! writes through the append-only run store, so a command replayed against a
//! warm store performs zero provider calls and emits identical files.

mod fixtures;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use medseek_core::answer::{label_ranking, load_answer_records, persist_answer_records};
use medseek_core::extract::{
    cached_fetch_page, page_key, split_passages, FixturePageProvider, LivePageProvider,
    PageProvider, PageStatus, DEFAULT_STRIDE_WORDS, DEFAULT_WINDOW_WORDS,
};
use medseek_core::llm::prompts::build_qa_prompt;
use medseek_core::llm::{complete, CompletionProvider, HttpProvider, LlmError, StubResponder};
use medseek_core::memorization::{
    contamination_report, gather_pairs, HttpSemanticScorer, SemanticScorer,
};
use medseek_core::qa::{run_prompt_grid, run_rag, run_rag_concat, LlmAnswerRow, RunPlan};
use medseek_core::rank::{score_passages, ScorerConfig};
use medseek_core::report::{
    accuracy_csv, accuracy_grid, accuracy_markdown, accuracy_svg, contamination_csv,
    contamination_markdown, curve_csv, curve_svg, error_tally_csv, find_universal_failures,
    mcnemar_csv, mcnemar_markdown, tally_error_categories, usersim_csv, wilcoxon_csv,
    ErrorAnnotation, McNemarRow, ReportFormat, WilcoxonRow,
};
use medseek_core::serp::{
    cached_search, canonicalize_url, FixtureSerpProvider, HttpSerpProvider, SerpError,
    SerpProvider,
};
use medseek_core::stats::{
    answering_score, conditional_correct_rate, cumulative_correct_curve, mcnemar_test,
    wilcoxon_signed_rank, CurveMode, RankCurve,
};
use medseek_core::store::short_id_of;
use medseek_core::topics::{load_topics, FieldAliases};
use medseek_core::usermodel::{diligent_user, lazy_user, summarize_outcomes, InspectionOutcome};
use medseek_core::{
    AnswerRecord, Engine, ModelSpec, NetworkPolicy, PromptKind, RunKind, RunStore, Serp,
    SerpEntry, Topic, TopicYear,
};

#[derive(Parser)]
#[command(
    name = "medseek",
    version,
    about = "Deterministic evaluation of search engines and language models on yes/no health questions"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run store directory (append-only JSON lines, one file per record kind).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Forbid network calls; anything not already recorded becomes an error.
    #[arg(long, global = true)]
    offline: bool,
    /// Cap on live provider calls for this invocation.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// TOML settings file; command-line flags win over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Topic-set inspection.
    #[command(subcommand)]
    Topics(TopicsCmd),
    /// Search-result acquisition.
    #[command(subcommand)]
    Serp(SerpCmd),
    /// Result-page fetching and text extraction.
    #[command(subcommand)]
    Pages(PagesCmd),
    /// Passage scoring against a question.
    #[command(subcommand)]
    Passages(PassagesCmd),
    /// Search-engine answer labeling, curves, scores and user simulation.
    #[command(subcommand)]
    Se(SeCmd),
    /// Prompting grids over language models.
    #[command(subcommand)]
    Llm(LlmCmd),
    /// Evidence-augmented prompting grids.
    #[command(subcommand)]
    Rag(RagCmd),
    /// Significance tests between answer tables.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Training-data memorization probe.
    #[command(subcommand)]
    Memcheck(MemcheckCmd),
    /// Failure annotation worksheets and tallies.
    #[command(subcommand)]
    Errors(ErrorsCmd),
    /// Re-render recorded results as reports.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Offline fixture bundles.
    #[command(subcommand)]
    Fixtures(FixturesCmd),
}

/// Topic file plus its dataset year, shared by every command that reads one.
#[derive(Args, Clone)]
struct TopicArgs {
    /// Topic file (.xml element format, or the .json mirror).
    #[arg(long)]
    topics: PathBuf,
    /// Dataset year of the topic file (2020, 2021 or 2022).
    #[arg(long)]
    year: u16,
}

/// Where uncached data may come from. Everything defaults to the config
/// file; with no source configured, commands work only off the warm store.
#[derive(Args, Clone, Default)]
struct SourceArgs {
    /// Recorded SERP directory (<dir>/<engine>/<topic_id>.json).
    #[arg(long)]
    serp_fixtures: Option<PathBuf>,
    /// Live SERP API endpoint.
    #[arg(long)]
    serp_endpoint: Option<String>,
    /// Recorded page directory (content-addressed .html files).
    #[arg(long)]
    page_fixtures: Option<PathBuf>,
    /// Fetch uncached pages over the network.
    #[arg(long)]
    live_pages: bool,
    /// Stub completion map (JSON, prompt hash to text).
    #[arg(long)]
    responder: Option<PathBuf>,
    /// Live completion API endpoint.
    #[arg(long)]
    endpoint: Option<String>,
    /// Remote passage-scorer endpoint; switches ranking from bm25 to neural.
    #[arg(long)]
    neural_endpoint: Option<String>,
}

#[derive(Args, Clone, Copy)]
struct WindowArgs {
    /// Passage window length in words.
    #[arg(long)]
    window: Option<usize>,
    /// Passage stride in words.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Subcommand)]
enum TopicsCmd {
    /// Parse a topic file and report what it contains.
    Validate(TopicsValidateArgs),
}

#[derive(Args)]
struct TopicsValidateArgs {
    #[command(flatten)]
    topics: TopicArgs,
}

#[derive(Subcommand)]
enum SerpCmd {
    /// Record the ranked results for every topic and engine.
    Fetch(SerpFetchArgs),
}

#[derive(Args)]
struct SerpFetchArgs {
    #[command(flatten)]
    topics: TopicArgs,
    /// Engine name, or `all`.
    #[arg(long, default_value = "all")]
    engine: String,
    /// Results per query, 1..=20.
    #[arg(long, default_value_t = 20)]
    depth: u32,
    #[command(flatten)]
    sources: SourceArgs,
}

#[derive(Subcommand)]
enum PagesCmd {
    /// Fetch and extract every page referenced by recorded rankings.
    Fetch(PagesFetchArgs),
}

#[derive(Args)]
struct PagesFetchArgs {
    /// Restrict to one engine's recorded rankings.
    #[arg(long)]
    engine: Option<String>,
    /// Only fetch pages ranked at or above this depth.
    #[arg(long)]
    depth: Option<u32>,
    #[command(flatten)]
    sources: SourceArgs,
}

#[derive(Subcommand)]
enum PassagesCmd {
    /// Score one page's passages against a question.
    Rank(PassagesRankArgs),
}

#[derive(Args)]
struct PassagesRankArgs {
    /// Question to score against.
    #[arg(long)]
    question: String,
    /// Page URL; must be recorded or fetchable from a configured source.
    #[arg(long)]
    url: String,
    /// How many top passages to print.
    #[arg(long, default_value_t = 3)]
    top: usize,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    sources: SourceArgs,
    /// Write every scored passage as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SeCmd {
    /// Label every (engine, topic, rank) result with the reader model.
    Answers(SeAnswersArgs),
    /// Cumulative correct-answer curve per engine.
    Curve(SeCurveArgs),
    /// Answering score and correct-given-answered rate per engine.
    Score(SeScoreArgs),
    /// Simulated user outcomes over labeled rankings.
    Usersim(SeUsersimArgs),
}

#[derive(Args)]
struct SeAnswersArgs {
    #[command(flatten)]
    topics: TopicArgs,
    /// Engine name, or `all`.
    #[arg(long, default_value = "all")]
    engine: String,
    /// Ranking depth to label, 1..=20.
    #[arg(long, default_value_t = 20)]
    depth: u32,
    /// Reader model id used for reading-comprehension labeling.
    #[arg(long)]
    reader_model: String,
    /// Provider name of the reader model (also names its credential env var).
    #[arg(long, default_value = "stub")]
    reader_provider: String,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    sources: SourceArgs,
}

#[derive(Args)]
struct SeCurveArgs {
    /// Curve depth, 1..=20.
    #[arg(long, default_value_t = 20)]
    depth: u32,
    /// Denominator: per-entry or per-topic.
    #[arg(long, default_value = "per-topic")]
    mode: String,
    /// csv or svg; inferred from the --out extension when omitted.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeScoreArgs {
    #[arg(long, default_value_t = 20)]
    depth: u32,
    /// Write the per-engine table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SeUsersimArgs {
    /// User model: lazy, diligent or both.
    #[arg(long, default_value = "both")]
    model: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LlmCmd {
    /// Run the prompting grid described by a plan file.
    Run(LlmRunArgs),
}

#[derive(Args)]
struct LlmRunArgs {
    /// Plan file (TOML) naming models, prompt kinds and shot counts.
    #[arg(long)]
    plan: PathBuf,
    /// Topic file; the year comes from the plan.
    #[arg(long)]
    topics: PathBuf,
    /// Answer rows, one JSON object per line.
    #[arg(long)]
    out: PathBuf,
    /// Per-configuration accuracy summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    sources: SourceArgs,
}

#[derive(Subcommand)]
enum RagCmd {
    /// Run the evidence grid described by a plan file.
    Run(RagRunArgs),
}

#[derive(Args)]
struct RagRunArgs {
    /// Plan file (TOML) with rag_ranks set.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    /// Engine whose recorded rankings supply the evidence pages.
    #[arg(long, default_value = "google")]
    engine: String,
    /// Concatenate the top-k passages into one prompt instead of one rank per row.
    #[arg(long)]
    concat_top: Option<u32>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    sources: SourceArgs,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Paired exact test of two systems' per-topic correctness.
    Mcnemar(StatsMcnemarArgs),
}

#[derive(Args)]
struct StatsMcnemarArgs {
    /// First answer table (JSON lines of rows).
    #[arg(long)]
    rows_a: PathBuf,
    /// Second answer table.
    #[arg(long)]
    rows_b: PathBuf,
    /// Filter for the first table: comma-separated key=value over model, kind, shots, rank.
    #[arg(long)]
    select_a: Option<String>,
    /// Filter for the second table.
    #[arg(long)]
    select_b: Option<String>,
    /// Display label of the first system.
    #[arg(long, default_value = "system_a")]
    label_a: String,
    /// Display label of the second system.
    #[arg(long, default_value = "system_b")]
    label_b: String,
    /// Write the test table (csv or markdown).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Also run the signed-rank test over per-topic correctness differences.
    #[arg(long)]
    wilcoxon_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MemcheckCmd {
    /// Compare guided vs general completions against topic narratives.
    Run(MemcheckRunArgs),
}

#[derive(Args)]
struct MemcheckRunArgs {
    #[command(flatten)]
    topics: TopicArgs,
    /// Model id to probe.
    #[arg(long)]
    model: String,
    /// Provider name of the probed model.
    #[arg(long, default_value = "stub")]
    provider: String,
    /// External semantic-similarity endpoint; adds a third metric column.
    #[arg(long)]
    semantic_endpoint: Option<String>,
    /// Write the verdict table (csv or markdown).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    sources: SourceArgs,
}

#[derive(Subcommand)]
enum ErrorsCmd {
    /// Build an annotation worksheet for topics every model failed.
    Export(ErrorsExportArgs),
    /// Tally a hand-filled annotation file into per-condition percentages.
    Tally(ErrorsTallyArgs),
}

#[derive(Args)]
struct ErrorsExportArgs {
    /// Answer tables (JSON lines); pass one per model or one combined table.
    #[arg(long, required = true, num_args = 1..)]
    rows: Vec<PathBuf>,
    /// Prompt condition to inspect (no_context, non_expert or expert).
    #[arg(long)]
    kind: String,
    #[command(flatten)]
    topics: TopicArgs,
    /// Re-ask each failed question with this output-token cap instead of
    /// reusing the recorded short answers; needs --plan and a completion source.
    #[arg(long)]
    requery_max_tokens: Option<u32>,
    /// Plan file naming the models, for re-query provider resolution.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sources: SourceArgs,
}

#[derive(Args)]
struct ErrorsTallyArgs {
    /// Filled annotation file (JSON array).
    #[arg(long)]
    annotations: PathBuf,
    /// Write the tally as CSV instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Render one report from recorded data.
    Emit(ReportEmitArgs),
}

#[derive(Args)]
struct ReportEmitArgs {
    /// What to render: curve (from the store) or accuracy (from --rows).
    #[arg(long)]
    what: String,
    /// Answer rows (JSON lines) for accuracy reports.
    #[arg(long)]
    rows: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    depth: u32,
    /// Curve denominator: per-entry or per-topic.
    #[arg(long, default_value = "per-topic")]
    mode: String,
    /// csv, svg or markdown; inferred from the --out extension when omitted.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum FixturesCmd {
    /// Write the self-contained offline fixture bundle.
    Init(FixturesInitArgs),
}

#[derive(Args)]
struct FixturesInitArgs {
    /// Directory to create the bundle in.
    #[arg(long)]
    out: PathBuf,
}

/// Non-credential settings mirrored from the command line; flags win.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    store: Option<PathBuf>,
    offline: Option<bool>,
    budget: Option<u64>,
    window_words: Option<usize>,
    stride_words: Option<usize>,
    serp_fixtures: Option<PathBuf>,
    serp_endpoint: Option<String>,
    page_fixtures: Option<PathBuf>,
    live_pages: Option<bool>,
    responder: Option<PathBuf>,
    endpoint: Option<String>,
    neural_endpoint: Option<String>,
    semantic_endpoint: Option<String>,
}

struct Ctx {
    store_dir: PathBuf,
    policy: Arc<NetworkPolicy>,
    config: FileConfig,
    run_id: String,
}

impl Ctx {
    fn open_store(&self) -> Result<RunStore> {
        RunStore::open(&self.store_dir)
            .with_context(|| format!("cannot open store {}", self.store_dir.display()))
    }

    fn windows(&self, args: WindowArgs) -> (usize, usize) {
        (
            args.window.or(self.config.window_words).unwrap_or(DEFAULT_WINDOW_WORDS),
            args.stride.or(self.config.stride_words).unwrap_or(DEFAULT_STRIDE_WORDS),
        )
    }

    fn sources(&self, mut src: SourceArgs) -> SourceArgs {
        if src.serp_fixtures.is_none() {
            src.serp_fixtures = self.config.serp_fixtures.clone();
        }
        if src.serp_endpoint.is_none() {
            src.serp_endpoint = self.config.serp_endpoint.clone();
        }
        if src.page_fixtures.is_none() {
            src.page_fixtures = self.config.page_fixtures.clone();
        }
        if !src.live_pages {
            src.live_pages = self.config.live_pages.unwrap_or(false);
        }
        if src.responder.is_none() {
            src.responder = self.config.responder.clone();
        }
        if src.endpoint.is_none() {
            src.endpoint = self.config.endpoint.clone();
        }
        if src.neural_endpoint.is_none() {
            src.neural_endpoint = self.config.neural_endpoint.clone();
        }
        src
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let config: FileConfig = match &cli.global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let offline = cli.global.offline || config.offline.unwrap_or(false);
    let budget = cli.global.budget.or(config.budget);
    let store_dir = cli
        .global
        .store
        .clone()
        .or_else(|| config.store.clone())
        .unwrap_or_else(|| PathBuf::from("store"));
    // Identical invocations share a run id, so replays do not mint new ids.
    let argv: Vec<String> = std::env::args().collect();
    let parts: Vec<&str> = argv.iter().map(String::as_str).collect();
    let ctx = Ctx {
        store_dir,
        policy: Arc::new(NetworkPolicy::new(offline, budget)),
        config,
        run_id: short_id_of(&parts),
    };

    match cli.command {
        Command::Topics(TopicsCmd::Validate(args)) => cmd_topics_validate(&args),
        Command::Serp(SerpCmd::Fetch(args)) => cmd_serp_fetch(&ctx, args),
        Command::Pages(PagesCmd::Fetch(args)) => cmd_pages_fetch(&ctx, args),
        Command::Passages(PassagesCmd::Rank(args)) => cmd_passages_rank(&ctx, args),
        Command::Se(SeCmd::Answers(args)) => cmd_se_answers(&ctx, args),
        Command::Se(SeCmd::Curve(args)) => cmd_se_curve(&ctx, args),
        Command::Se(SeCmd::Score(args)) => cmd_se_score(&ctx, args),
        Command::Se(SeCmd::Usersim(args)) => cmd_se_usersim(&ctx, args),
        Command::Llm(LlmCmd::Run(args)) => cmd_llm_run(&ctx, args),
        Command::Rag(RagCmd::Run(args)) => cmd_rag_run(&ctx, args),
        Command::Stats(StatsCmd::Mcnemar(args)) => cmd_stats_mcnemar(&args),
        Command::Memcheck(MemcheckCmd::Run(args)) => cmd_memcheck_run(&ctx, args),
        Command::Errors(ErrorsCmd::Export(args)) => cmd_errors_export(&ctx, args),
        Command::Errors(ErrorsCmd::Tally(args)) => cmd_errors_tally(&args),
        Command::Report(ReportCmd::Emit(args)) => cmd_report_emit(&ctx, args),
        Command::Fixtures(FixturesCmd::Init(args)) => cmd_fixtures_init(&args),
    }
}

// ---- providers ----------------------------------------------------------

/// Placeholder provider for store-only runs: any actual lookup is a miss.
struct NullSerpProvider;

impl SerpProvider for NullSerpProvider {
    fn fetch(&self, engine: Engine, question: &str, _depth: u32) -> Result<Vec<SerpEntry>, SerpError> {
        Err(SerpError::ProviderUnavailable(format!(
            "no search source configured for {engine} `{question}`; pass --serp-fixtures or --serp-endpoint"
        )))
    }

    fn name(&self) -> &str {
        "none"
    }
}

struct NullPageProvider;

impl PageProvider for NullPageProvider {
    fn fetch(&self, _url: &str) -> Result<String, String> {
        Err("no page source configured".to_string())
    }

    fn name(&self) -> &str {
        "none"
    }
}

struct NullCompletionProvider;

impl CompletionProvider for NullCompletionProvider {
    fn complete(&self, _model: &ModelSpec, _prompt: &str) -> Result<String, LlmError> {
        Err(LlmError::ProviderError {
            provider: "none".into(),
            status: "no completion source configured; pass --responder or --endpoint".into(),
        })
    }

    fn name(&self) -> &str {
        "none"
    }
}

/// Credential lookup; only env vars may carry secrets.
fn env_credential(name: &str) -> Option<String> {
    let var = format!("MEDSEEK_{}_KEY", name.to_uppercase().replace('-', "_"));
    std::env::var(var).ok()
}

fn serp_provider_for(
    engine: Engine,
    src: &SourceArgs,
    topics: &[Topic],
    policy: &Arc<NetworkPolicy>,
) -> Box<dyn SerpProvider> {
    if let Some(dir) = &src.serp_fixtures {
        return Box::new(FixtureSerpProvider::new(dir, topics));
    }
    if let Some(endpoint) = &src.serp_endpoint {
        return Box::new(HttpSerpProvider::new(
            endpoint,
            env_credential(engine.as_str()),
            Arc::clone(policy),
        ));
    }
    Box::new(NullSerpProvider)
}

/// Returns the page source and whether it is store-only (no real provider).
fn page_provider(src: &SourceArgs, policy: &Arc<NetworkPolicy>) -> (Box<dyn PageProvider>, bool) {
    if let Some(dir) = &src.page_fixtures {
        (Box::new(FixturePageProvider::new(dir)), false)
    } else if src.live_pages {
        (Box::new(LivePageProvider::new(Arc::clone(policy))), false)
    } else {
        (Box::new(NullPageProvider), true)
    }
}

fn completion_provider(
    src: &SourceArgs,
    provider_name: &str,
    policy: &Arc<NetworkPolicy>,
) -> Result<Box<dyn CompletionProvider>> {
    if let Some(path) = &src.responder {
        return Ok(Box::new(StubResponder::from_file(path)?));
    }
    if let Some(endpoint) = &src.endpoint {
        return Ok(Box::new(HttpProvider::new(
            endpoint,
            env_credential(provider_name),
            Arc::clone(policy),
        )));
    }
    Ok(Box::new(NullCompletionProvider))
}

fn scorer_config(src: &SourceArgs, policy: &Arc<NetworkPolicy>) -> ScorerConfig {
    match &src.neural_endpoint {
        Some(endpoint) => ScorerConfig::Neural {
            endpoint: endpoint.clone(),
            policy: Arc::clone(policy),
        },
        None => ScorerConfig::Bm25,
    }
}

// ---- small shared helpers ------------------------------------------------

fn load_topic_args(args: &TopicArgs) -> Result<(Vec<Topic>, TopicYear)> {
    let year = TopicYear::try_from(args.year).map_err(|e| anyhow!("{e}"))?;
    let topics = load_topics(&args.topics, year, &FieldAliases::default())
        .with_context(|| format!("cannot load topics from {}", args.topics.display()))?;
    Ok((topics, year))
}

fn parse_engines(spec: &str) -> Result<Vec<Engine>> {
    if spec == "all" {
        Ok(Engine::ALL.to_vec())
    } else {
        Ok(vec![spec.parse::<Engine>()?])
    }
}

fn parse_kind(spec: &str) -> Result<PromptKind> {
    spec.parse::<PromptKind>().map_err(|e| anyhow!("{e}"))
}

fn parse_mode(spec: &str) -> Result<CurveMode> {
    match spec {
        "per-entry" => Ok(CurveMode::PerEntry),
        "per-topic" => Ok(CurveMode::PerTopic),
        other => bail!("unknown curve mode `{other}` (expected per-entry or per-topic)"),
    }
}

/// Explicit --format wins; otherwise the output extension decides.
fn resolve_format(flag: &Option<String>, out: &Path, fallback: ReportFormat) -> Result<ReportFormat> {
    if let Some(spec) = flag {
        return spec.parse::<ReportFormat>().map_err(|e| anyhow!("{e}"));
    }
    Ok(match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        Some("svg") => ReportFormat::Svg,
        Some("md") | Some("markdown") => ReportFormat::Markdown,
        _ => fallback,
    })
}

fn write_output(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_rows(path: &Path, rows: &[LlmAnswerRow]) -> Result<()> {
    let mut body = String::new();
    for row in rows {
        body.push_str(&serde_json::to_string(row)?);
        body.push('\n');
    }
    write_output(path, &body)
}

fn read_rows(path: &Path) -> Result<Vec<LlmAnswerRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read rows from {}", path.display()))?;
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| serde_json::from_str(line).with_context(|| format!("bad row in {}", path.display())))
        .collect()
}

fn sorted_topics(topics: &[Topic]) -> Vec<&Topic> {
    let mut refs: Vec<&Topic> = topics.iter().collect();
    refs.sort_by_key(|t| t.id);
    refs
}

/// One recorded ranking per topic for `engine`, deepest recording winning.
fn recorded_serps(store: &RunStore, engine: Engine) -> Result<BTreeMap<u32, Serp>> {
    let mut map: BTreeMap<u32, Serp> = BTreeMap::new();
    for record in store.records(RunKind::Serp) {
        let serp: Serp = serde_json::from_value(record.payload).context("recorded serp payload")?;
        if serp.engine != engine {
            continue;
        }
        match map.get(&serp.topic_id) {
            Some(existing) if existing.entries.len() >= serp.entries.len() => {}
            _ => {
                map.insert(serp.topic_id, serp);
            }
        }
    }
    Ok(map)
}

/// Guard for store-only page access: every URL must already be recorded,
/// otherwise the command would silently mint fetch-failure records.
fn ensure_pages_cached<'a>(store: &RunStore, urls: impl IntoIterator<Item = &'a str>) -> Result<()> {
    for url in urls {
        let key = page_key(url)?;
        if store.get(RunKind::Page, &key)?.is_none() {
            bail!(
                "page {url} is not in the store and no page source is configured; \
                 pass --page-fixtures or --live-pages"
            );
        }
    }
    Ok(())
}

/// Grid runs tolerate per-cell provider failures by noting them, but under
/// --offline a refused call means the store lacks a promised record, which
/// the contract treats as an error rather than a silent all-wrong table.
fn check_offline_notes(policy: &NetworkPolicy, rows: &[LlmAnswerRow]) -> Result<()> {
    if !policy.is_offline() {
        return Ok(());
    }
    let refused = rows
        .iter()
        .filter(|r| r.note.as_deref().is_some_and(|n| n.contains("offline mode forbids")))
        .count();
    if refused > 0 {
        bail!("{refused} completions are not in the store and offline mode forbids fetching them");
    }
    Ok(())
}

fn load_plan(path: &Path) -> Result<RunPlan> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read plan {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid plan {}", path.display()))
}

/// Provider name used for credential lookup. A live endpoint serves exactly
/// one provider, so mixing provider names in a plan only works with a stub.
fn plan_provider_name(plan: &RunPlan, src: &SourceArgs) -> Result<String> {
    let names: BTreeSet<&str> = plan.models.iter().map(|m| m.provider.as_str()).collect();
    if src.endpoint.is_some() && names.len() > 1 {
        bail!("plan mixes provider names {names:?}; one live endpoint serves one provider");
    }
    Ok(names.into_iter().next().unwrap_or("stub").to_string())
}

// ---- commands -------------------------------------------------------------

fn cmd_topics_validate(args: &TopicsValidateArgs) -> Result<()> {
    let (topics, year) = load_topic_args(&args.topics)?;
    let yes = topics.iter().filter(|t| t.stance == medseek_core::BinaryStance::Yes).count();
    let ids: Vec<u32> = topics.iter().map(|t| t.id).collect();
    let min = ids.iter().min().copied().unwrap_or(0);
    let max = ids.iter().max().copied().unwrap_or(0);
    println!(
        "{} topics from {}, year {}, ids {min}..{max}, stances {yes} yes / {} no",
        topics.len(),
        args.topics.topics.display(),
        year.as_u16(),
        topics.len() - yes,
    );
    if topics.len() != 50 {
        println!("note: official sets carry 50 topics; this file has {}", topics.len());
    }
    println!("ok");
    Ok(())
}

fn cmd_serp_fetch(ctx: &Ctx, args: SerpFetchArgs) -> Result<()> {
    let (topics, _year) = load_topic_args(&args.topics)?;
    let engines = parse_engines(&args.engine)?;
    let src = ctx.sources(args.sources);
    let store = ctx.open_store()?;
    let topics_sorted = sorted_topics(&topics);
    let mut entries = 0;
    for engine in engines {
        let provider = serp_provider_for(engine, &src, &topics, &ctx.policy);
        for topic in &topics_sorted {
            let serp = cached_search(
                engine,
                &topic.question,
                topic.id,
                args.depth,
                &*provider,
                &store,
                &ctx.run_id,
            )?;
            entries += serp.entries.len();
        }
        println!("{engine}: {} topics recorded", topics_sorted.len());
    }
    println!("{entries} ranked entries");
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_pages_fetch(ctx: &Ctx, args: PagesFetchArgs) -> Result<()> {
    let src = ctx.sources(args.sources);
    let engine_filter = match &args.engine {
        Some(spec) => Some(spec.parse::<Engine>()?),
        None => None,
    };
    let store = ctx.open_store()?;
    let (provider, store_only) = page_provider(&src, &ctx.policy);
    if store_only {
        bail!("pages fetch needs a page source; pass --page-fixtures or --live-pages");
    }
    let mut urls = BTreeSet::new();
    for record in store.records(RunKind::Serp) {
        let serp: Serp = serde_json::from_value(record.payload).context("recorded serp payload")?;
        if engine_filter.map_or(false, |e| e != serp.engine) {
            continue;
        }
        for entry in &serp.entries {
            if args.depth.map_or(true, |d| entry.rank <= d) {
                urls.insert(canonicalize_url(&entry.url)?);
            }
        }
    }
    if urls.is_empty() {
        bail!("no recorded search results match; run `serp fetch` first");
    }
    let (mut ok, mut failed, mut empty) = (0, 0, 0);
    for url in &urls {
        let page = cached_fetch_page(url, &*provider, &store, &ctx.run_id)?;
        match page.status {
            PageStatus::Ok => ok += 1,
            PageStatus::FetchFailed => failed += 1,
            PageStatus::EmptyAfterStrip => empty += 1,
        }
    }
    println!("{} pages: {ok} ok, {failed} failed, {empty} empty", urls.len());
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_passages_rank(ctx: &Ctx, args: PassagesRankArgs) -> Result<()> {
    let src = ctx.sources(args.sources);
    let store = ctx.open_store()?;
    let (provider, store_only) = page_provider(&src, &ctx.policy);
    if store_only {
        ensure_pages_cached(&store, [args.url.as_str()])?;
    }
    let page = cached_fetch_page(&args.url, &*provider, &store, &ctx.run_id)?;
    if page.status != PageStatus::Ok {
        bail!("page {} is unusable (status {:?})", args.url, page.status);
    }
    let (window, stride) = ctx.windows(args.window);
    let passages = split_passages(&page, window, stride)?;
    let scorer = scorer_config(&src, &ctx.policy).build(&passages);
    let mut scored = score_passages(&args.question, &passages, &*scorer)?;
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.passage.index.cmp(&b.passage.index))
    });
    for sp in scored.iter().take(args.top) {
        let preview: Vec<&str> = sp.passage.text.split_whitespace().take(12).collect();
        println!("{:>4}  {:>10.4}  {}...", sp.passage.index, sp.score, preview.join(" "));
    }
    if let Some(out) = &args.out {
        let mut writer = csv::Writer::from_path(out)
            .with_context(|| format!("cannot write {}", out.display()))?;
        writer.write_record(["url", "passage_index", "score", "text"])?;
        for sp in &scored {
            writer.write_record([
                sp.passage.source_url.as_str(),
                &sp.passage.index.to_string(),
                &format!("{:.6}", sp.score),
                sp.passage.text.as_str(),
            ])?;
        }
        writer.flush()?;
        println!("wrote {}", out.display());
    }
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_se_answers(ctx: &Ctx, args: SeAnswersArgs) -> Result<()> {
    let (topics, _year) = load_topic_args(&args.topics)?;
    let engines = parse_engines(&args.engine)?;
    let src = ctx.sources(args.sources);
    let store = ctx.open_store()?;
    let reader_model = ModelSpec::new(&args.reader_provider, &args.reader_model);
    reader_model.validate()?;
    let reader = completion_provider(&src, &args.reader_provider, &ctx.policy)?;
    let (pages, store_only_pages) = page_provider(&src, &ctx.policy);
    let scorer = scorer_config(&src, &ctx.policy);
    let (window, stride) = ctx.windows(args.window);
    let topics_sorted = sorted_topics(&topics);
    let mut total = 0;
    for engine in engines {
        let serp_provider = serp_provider_for(engine, &src, &topics, &ctx.policy);
        for topic in &topics_sorted {
            let serp = cached_search(
                engine,
                &topic.question,
                topic.id,
                args.depth,
                &*serp_provider,
                &store,
                &ctx.run_id,
            )?;
            if store_only_pages {
                ensure_pages_cached(&store, serp.entries.iter().map(|e| e.url.as_str()))?;
            }
            let records = label_ranking(
                &serp,
                topic,
                &reader_model,
                &*reader,
                &*pages,
                &scorer,
                window,
                stride,
                &store,
                &ctx.run_id,
            )?;
            persist_answer_records(&records, &reader_model.model_id, &store, &ctx.run_id)?;
            total += records.len();
        }
        println!("{engine}: labeled {} topics", topics_sorted.len());
    }
    println!("{total} answer records");
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_se_curve(ctx: &Ctx, args: SeCurveArgs) -> Result<()> {
    let store = ctx.open_store()?;
    let records = load_answer_records(&store)?;
    if records.is_empty() {
        bail!("no answer records in the store; run `se answers` first");
    }
    let mode = parse_mode(&args.mode)?;
    let engines: BTreeSet<Engine> = records.iter().map(|r| r.engine).collect();
    let curves: Vec<RankCurve> = engines
        .iter()
        .map(|engine| cumulative_correct_curve(*engine, &records, args.depth, mode))
        .collect::<Result<_, _>>()?;
    let body = match resolve_format(&args.format, &args.out, ReportFormat::Csv)? {
        ReportFormat::Csv => curve_csv(&curves),
        ReportFormat::Svg => curve_svg(&curves),
        ReportFormat::Markdown => bail!("curves render as csv or svg"),
    };
    write_output(&args.out, &body)?;
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_se_score(ctx: &Ctx, args: SeScoreArgs) -> Result<()> {
    let store = ctx.open_store()?;
    let records = load_answer_records(&store)?;
    if records.is_empty() {
        bail!("no answer records in the store; run `se answers` first");
    }
    let engines: BTreeSet<Engine> = records.iter().map(|r| r.engine).collect();
    let mut body = String::from("engine,answering_score,conditional_correct_rate\n");
    for engine in &engines {
        let subset: Vec<AnswerRecord> =
            records.iter().filter(|r| r.engine == *engine).cloned().collect();
        let score = answering_score(&subset, args.depth)?;
        let rate = match conditional_correct_rate(&subset) {
            Ok(v) => format!("{v:.6}"),
            Err(_) => String::new(),
        };
        println!("{engine}: answering_score={score:.3} correct_given_answered={rate}");
        body.push_str(&format!("{engine},{score:.6},{rate}\n"));
    }
    if let Some(out) = &args.out {
        write_output(out, &body)?;
    }
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_se_usersim(ctx: &Ctx, args: SeUsersimArgs) -> Result<()> {
    let models: Vec<&str> = match args.model.as_str() {
        "lazy" => vec!["lazy"],
        "diligent" => vec!["diligent"],
        "both" => vec!["lazy", "diligent"],
        other => bail!("unknown user model `{other}` (expected lazy, diligent or both)"),
    };
    let store = ctx.open_store()?;
    let records = load_answer_records(&store)?;
    if records.is_empty() {
        bail!("no answer records in the store; run `se answers` first");
    }
    // Records arrive sorted by (engine, topic, rank), so each group is one
    // topic's ranking in inspection order.
    let mut rankings: BTreeMap<(Engine, u32), Vec<AnswerRecord>> = BTreeMap::new();
    for record in &records {
        rankings.entry((record.engine, record.topic_id)).or_default().push(record.clone());
    }
    let engines: BTreeSet<Engine> = rankings.keys().map(|(engine, _)| *engine).collect();
    let mut summaries = Vec::new();
    for engine in &engines {
        for model in &models {
            let outcomes: Vec<InspectionOutcome> = rankings
                .iter()
                .filter(|((e, _), _)| e == engine)
                .map(|(_, ranking)| {
                    if *model == "lazy" {
                        lazy_user(ranking)
                    } else {
                        diligent_user(ranking)
                    }
                })
                .collect();
            summaries.push((format!("{engine}/{model}"), summarize_outcomes(&outcomes)?));
        }
    }
    write_output(&args.out, &usersim_csv(&summaries))?;
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_llm_run(ctx: &Ctx, args: LlmRunArgs) -> Result<()> {
    let plan = load_plan(&args.plan)?;
    let topics = load_topics(&args.topics, plan.topic_year, &FieldAliases::default())
        .with_context(|| format!("cannot load topics from {}", args.topics.display()))?;
    let src = ctx.sources(args.sources);
    let provider = completion_provider(&src, &plan_provider_name(&plan, &src)?, &ctx.policy)?;
    let store = ctx.open_store()?;
    let rows = run_prompt_grid(&plan, &topics, &*provider, &store, &ctx.run_id)?;
    check_offline_notes(&ctx.policy, &rows)?;
    let noted = rows.iter().filter(|r| r.note.is_some()).count();
    write_rows(&args.out, &rows)?;
    println!("{} rows, {noted} with notes", rows.len());
    if let Some(summary) = &args.summary {
        write_output(summary, &accuracy_csv(&accuracy_grid(&rows)))?;
    }
    println!("{}", store.stats().summary_line());
    Ok(())
}

fn cmd_rag_run(ctx: &Ctx, args: RagRunArgs) -> Result<()> {
    let plan = load_plan(&args.plan)?;
    let topics = load_topics(&args.topics, plan.topic_year, &FieldAliases::default())
        .with_context(|| format!("cannot load topics from {}", args.topics.display()))?;
    let engine = args.engine.parse::<Engine>()?;
    let src = ctx.sources(args.sources);
    let provider = completion_provider(&src, &plan_provider_name(&plan, &src)?, &ctx.policy)?;
    let store = ctx.open_store()?;
    let serps = recorded_serps(&store, engine)?;
    for topic in &topics {
        if !serps.contains_key(&topic.id) {
            bail!(
                "no recorded {engine} ranking for topic {}; run `serp fetch` or `se answers` first",
                topic.id
            );
        }
    }
    let (pages, store_only_pages) = page_provider(&src, &ctx.policy);
    if store_only_pages {
        let mut ranks: Vec<u32> = match args.concat_top {
            Some(k) => (1..=k).collect(),
            None => plan.rag_ranks.clone(),
        };
        ranks.sort_unstable();
        ranks.dedup();
        for topic in &topics {
            let serp = &serps[&topic.id];
            let urls = serp
                .entries
                .iter()
                .filter(|e| ranks.contains(&e.rank))
                .map(|e| e.url.as_str());
            ensure_pages_cached(&store, urls)?;
        }
    }
    let scorer = scorer_config(&src, &ctx.policy);
    let (window, stride) = ctx.windows(args.window);
    let rows = match args.concat_top {
        Some(k) => run_rag_concat(
            &plan, &topics, &serps, &*pages, &scorer, &*provider, k, window, stride, &store,
            &ctx.run_id,
        )?,
        None => run_rag(
            &plan, &topics, &serps, &*pages, &scorer, &*provider, window, stride, &store,
            &ctx.run_id,
        )?,
    };
    check_offline_notes(&ctx.policy, &rows)?;
    let noted = rows.iter().filter(|r| r.note.is_some()).count();
    write_rows(&args.out, &rows)?;
    println!("{} rows, {noted} with notes", rows.len());
    if let Some(summary) = &args.summary {
        write_output(summary, &accuracy_csv(&accuracy_grid(&rows)))?;
    }
    println!("{}", store.stats().summary_line());
    Ok(())
}

// ---- stats ----------------------------------------------------------------

#[derive(Default)]
struct RowSelector {
    model: Option<String>,
    kind: Option<PromptKind>,
    shots: Option<u8>,
    rank: Option<u32>,
}

fn parse_selector(spec: &str) -> Result<RowSelector> {
    let mut sel = RowSelector::default();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("selector part `{part}` is not key=value"))?;
        let value = value.trim();
        match key.trim() {
            "model" => sel.model = Some(value.to_string()),
            "kind" => sel.kind = Some(parse_kind(value)?),
            "shots" => sel.shots = Some(value.parse()?),
            "rank" => sel.rank = Some(value.parse()?),
            other => bail!("unknown selector key `{other}` (expected model, kind, shots or rank)"),
        }
    }
    Ok(sel)
}

fn row_matches(row: &LlmAnswerRow, sel: &RowSelector) -> bool {
    sel.model.as_deref().map_or(true, |m| row.model_id == m)
        && sel.kind.map_or(true, |k| row.prompt_kind == k)
        && sel.shots.map_or(true, |s| row.shots == Some(s))
        && sel.rank.map_or(true, |r| row.rag_rank == Some(r))
}

fn correctness_by_topic(
    rows: &[LlmAnswerRow],
    sel: &Option<String>,
    which: &str,
) -> Result<BTreeMap<u32, bool>> {
    let sel = match sel {
        Some(spec) => Some(parse_selector(spec)?),
        None => None,
    };
    let mut map = BTreeMap::new();
    for row in rows {
        if sel.as_ref().map_or(true, |s| row_matches(row, s)) {
            if map.insert(row.topic_id, row.correct).is_some() {
                bail!(
                    "{which} holds several rows for topic {}; narrow it with a selector \
                     (model=, kind=, shots=, rank=)",
                    row.topic_id
                );
            }
        }
    }
    if map.is_empty() {
        bail!("{which}: no rows match the selection");
    }
    Ok(map)
}

fn cmd_stats_mcnemar(args: &StatsMcnemarArgs) -> Result<()> {
    let rows_a = read_rows(&args.rows_a)?;
    let rows_b = read_rows(&args.rows_b)?;
    let map_a = correctness_by_topic(&rows_a, &args.select_a, "--rows-a")?;
    let map_b = correctness_by_topic(&rows_b, &args.select_b, "--rows-b")?;
    if map_a.keys().ne(map_b.keys()) {
        let only_a: Vec<u32> = map_a.keys().filter(|k| !map_b.contains_key(k)).copied().collect();
        let only_b: Vec<u32> = map_b.keys().filter(|k| !map_a.contains_key(k)).copied().collect();
        bail!(
            "paired test needs identical topic sets; only in --rows-a: {only_a:?}, \
             only in --rows-b: {only_b:?}"
        );
    }
    let a: Vec<bool> = map_a.values().copied().collect();
    let b: Vec<bool> = map_b.values().copied().collect();
    let result = mcnemar_test(&a, &b)?;
    println!(
        "{} vs {} over {} topics: b={} c={} p={:.6}{}",
        args.label_a,
        args.label_b,
        a.len(),
        result.b,
        result.c,
        result.p_value,
        if result.p_value < 0.05 { " (significant at 0.05)" } else { "" },
    );
    if let Some(out) = &args.out {
        let row = McNemarRow {
            system_a: args.label_a.clone(),
            system_b: args.label_b.clone(),
            result: result.clone(),
        };
        let body = match resolve_format(&args.format, out, ReportFormat::Csv)? {
            ReportFormat::Csv => mcnemar_csv(&[row]),
            ReportFormat::Markdown => mcnemar_markdown(&[row]),
            ReportFormat::Svg => bail!("test tables render as csv or markdown"),
        };
        write_output(out, &body)?;
    }
    if let Some(wilcoxon_out) = &args.wilcoxon_out {
        let diffs: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| (x as i8 - y as i8) as f64)
            .collect();
        let wres = wilcoxon_signed_rank(&diffs)?;
        println!(
            "signed-rank: w={:.1} n_nonzero={} direction={} p={:.6}",
            wres.w, wres.n_nonzero, wres.direction, wres.p_value
        );
        let wrow = WilcoxonRow {
            system_a: args.label_a.clone(),
            system_b: args.label_b.clone(),
            result: wres,
        };
        write_output(wilcoxon_out, &wilcoxon_csv(&[wrow]))?;
    }
    Ok(())
}

fn cmd_memcheck_run(ctx: &Ctx, args: MemcheckRunArgs) -> Result<()> {
    let (topics, year) = load_topic_args(&args.topics)?;
    let src = ctx.sources(args.sources);
    let store = ctx.open_store()?;
    let model = ModelSpec::new(&args.provider, &args.model);
    model.validate()?;
    let provider = completion_provider(&src, &args.provider, &ctx.policy)?;
    let topics_sorted: Vec<Topic> = sorted_topics(&topics).into_iter().cloned().collect();
    let pairs = gather_pairs(&topics_sorted, year, &model, &*provider, &store, &ctx.run_id)?;
    let semantic_endpoint = args
        .semantic_endpoint
        .clone()
        .or_else(|| ctx.config.semantic_endpoint.clone());
    let scorer = semantic_endpoint
        .map(|endpoint| HttpSemanticScorer::new(&endpoint, Arc::clone(&ctx.policy)));
    let report = contamination_report(
        &pairs,
        scorer.as_ref().map(|s| s as &dyn SemanticScorer),
    )?;
    for verdict in &report.verdicts {
        println!(
            "{}: general={:.4} guided={:.4} p={:.6}{}",
            verdict.metric,
            verdict.mean_general,
            verdict.mean_guided,
            verdict.p_value,
            if verdict.flagged { " flagged" } else { "" },
        );
    }
    if let Some(out) = &args.out {
        let body = match resolve_format(&args.format, out, ReportFormat::Csv)? {
            ReportFormat::Csv => contamination_csv(&report),
            ReportFormat::Markdown => contamination_markdown(&report),
            ReportFormat::Svg => bail!("the probe table renders as csv or markdown"),
        };
        write_output(out, &body)?;
    }
    println!("{}", store.stats().summary_line());
    Ok(())
}

// ---- errors ----------------------------------------------------------------

/// Worksheet row handed to a human annotator. Once `category` is filled with
/// one of the three category names, the file tallies directly.
#[derive(serde::Serialize)]
struct WorksheetEntry {
    topic_id: u32,
    model_id: String,
    prompt_kind: PromptKind,
    question: String,
    completion: String,
    category: String,
    free_text_rationale: String,
}

fn cmd_errors_export(ctx: &Ctx, args: ErrorsExportArgs) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    // A grid file mixes shot counts and evidence ranks; judge each model by
    // its least-assisted configuration (fewest shots, then lowest evidence
    // rank), since the annotation is about the plain question.
    let mut by_config: BTreeMap<String, BTreeMap<(u8, u32), Vec<LlmAnswerRow>>> = BTreeMap::new();
    for path in &args.rows {
        for row in read_rows(path)? {
            if row.prompt_kind != kind {
                continue;
            }
            let config = (row.shots.unwrap_or(u8::MAX), row.rag_rank.unwrap_or(0));
            by_config
                .entry(row.model_id.clone())
                .or_default()
                .entry(config)
                .or_default()
                .push(row);
        }
    }
    if by_config.is_empty() {
        bail!("no rows carry prompt kind {}", kind.as_str());
    }
    let tables: Vec<Vec<LlmAnswerRow>> = by_config
        .values()
        .map(|configs| configs.values().next().expect("nonempty by construction").clone())
        .collect();
    let failures = find_universal_failures(&tables, kind)?;
    let (topics, _year) = load_topic_args(&args.topics)?;
    let questions: BTreeMap<u32, &str> =
        topics.iter().map(|t| (t.id, t.question.as_str())).collect();

    let mut worksheet = Vec::new();
    for table in &tables {
        for row in table {
            if !failures.contains(&row.topic_id) {
                continue;
            }
            let question = questions
                .get(&row.topic_id)
                .ok_or_else(|| anyhow!("topic {} is not in the topic file", row.topic_id))?;
            worksheet.push(WorksheetEntry {
                topic_id: row.topic_id,
                model_id: row.model_id.clone(),
                prompt_kind: kind,
                question: (*question).to_string(),
                completion: row.raw_text.clone(),
                category: String::new(),
                free_text_rationale: String::new(),
            });
        }
    }
    worksheet.sort_by(|a, b| (a.topic_id, &a.model_id).cmp(&(b.topic_id, &b.model_id)));

    if let Some(max_tokens) = args.requery_max_tokens {
        let plan_path = args
            .plan
            .as_ref()
            .ok_or_else(|| anyhow!("--requery-max-tokens needs --plan for provider names"))?;
        let plan = load_plan(plan_path)?;
        let src = ctx.sources(args.sources);
        let provider = completion_provider(&src, &plan_provider_name(&plan, &src)?, &ctx.policy)?;
        let store = ctx.open_store()?;
        for entry in &mut worksheet {
            let mut model = plan
                .models
                .iter()
                .find(|m| m.model_id == entry.model_id)
                .cloned()
                .ok_or_else(|| anyhow!("plan does not list model {}", entry.model_id))?;
            model.max_output_tokens = max_tokens;
            let prompt = build_qa_prompt(&entry.question, kind);
            entry.completion = complete(&model, &prompt, &*provider, &store, &ctx.run_id)?.raw_text;
        }
        println!("{}", store.stats().summary_line());
    }

    let body = serde_json::to_string_pretty(&worksheet)?;
    write_output(&args.out, &body)?;
    println!(
        "{} universal failures, {} worksheet entries",
        failures.len(),
        worksheet.len()
    );
    Ok(())
}

fn cmd_errors_tally(args: &ErrorsTallyArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.annotations)
        .with_context(|| format!("cannot read {}", args.annotations.display()))?;
    let annotations: Vec<ErrorAnnotation> = serde_json::from_str(&text)
        .with_context(|| format!("invalid annotation file {}", args.annotations.display()))?;
    let tallies = tally_error_categories(&annotations)?;
    let body = error_tally_csv(&tallies);
    match &args.out {
        Some(out) => write_output(out, &body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn cmd_report_emit(ctx: &Ctx, args: ReportEmitArgs) -> Result<()> {
    match args.what.as_str() {
        "curve" => cmd_se_curve(
            ctx,
            SeCurveArgs {
                depth: args.depth,
                mode: args.mode.clone(),
                format: args.format.clone(),
                out: args.out.clone(),
            },
        ),
        "accuracy" => {
            let rows_path = args
                .rows
                .as_ref()
                .ok_or_else(|| anyhow!("accuracy reports need --rows"))?;
            let cells = accuracy_grid(&read_rows(rows_path)?);
            let body = match resolve_format(&args.format, &args.out, ReportFormat::Csv)? {
                ReportFormat::Csv => accuracy_csv(&cells),
                ReportFormat::Markdown => accuracy_markdown(&cells),
                ReportFormat::Svg => accuracy_svg(&cells),
            };
            write_output(&args.out, &body)
        }
        other => bail!("unknown report `{other}` (expected curve or accuracy)"),
    }
}

fn cmd_fixtures_init(args: &FixturesInitArgs) -> Result<()> {
    let summary = fixtures::write_bundle(&args.out)?;
    println!(
        "bundle at {}: {} topics, {} recorded rankings, {} pages, {} responder entries",
        args.out.display(),
        summary.topics,
        summary.serps,
        summary.pages,
        summary.responder_entries,
    );
    println!("plans: plan_prompting.toml, plan_rag.toml");
    Ok(())
}

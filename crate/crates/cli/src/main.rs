//! `agora`: run analysis stages over a workspace directory.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when a stage's
//! inputs are missing, 3 when a model backend fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use agora_core::backends::adapter::{AdapterClient, DEFAULT_TIMEOUT};
use agora_core::backends::lexicon::{LexiconClassifier, Lexicons};
use agora_core::backends::ner::ReferenceNer;
use agora_core::backends::tfidf::TfidfSimilarity;
use agora_core::clustering::{ClusterMode, DEFAULT_THRESHOLD};
use agora_core::pipeline::{self, ClusterOptions, IngestOptions};
use agora_core::report::ExportFormat;
use agora_core::threadgraph::PostRankConfig;
use agora_core::workspace::{OrphanPolicy, Workspace, WorkspaceConfig};
use agora_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

#[derive(Parser, Debug)]
#[command(
    name = "agora",
    version,
    about = "Argument mining and deliberation analytics"
)]
struct Cli {
    /// Workspace directory.
    #[arg(long, short = 'w', global = true, default_value = ".")]
    workspace: PathBuf,

    /// Worker threads for per-thread stages.
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest a newline-delimited JSON dump.
    Ingest(IngestArgs),
    /// Discover aspects as named entities in root posts.
    Aspects(AspectsArgs),
    /// Select topic-relevant threads.
    Filter(FilterArgs),
    /// Label posts with aspect and stance.
    Classify(ClassifyArgs),
    /// Cluster each thread's arguments.
    Cluster(ClusterArgs),
    /// Structural metrics and PostRank.
    Metrics(MetricsArgs),
    /// Deliberation Intensity Score per thread.
    Dis(SubsetArg),
    /// Stance dependence between replies and their parents.
    Stance(StanceArgs),
    /// Export annotated reply trees.
    Export(ExportArgs),
    /// Distribution tables and corpus summary.
    Report(SubsetArg),
    /// Score labels against a gold file.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SubsetArg {
    /// Thread subset label; defaults to T_<topic>.
    #[arg(long)]
    subset: Option<String>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Author-hash salt; generated and stored when absent.
    #[arg(long)]
    salt: Option<String>,
    #[arg(long, value_enum)]
    orphan_policy: Option<OrphanArg>,
    /// Field rename as `field=source`, e.g. `body=text`.
    #[arg(long = "map", value_name = "FIELD=SOURCE")]
    map: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrphanArg {
    AttachRoot,
    Drop,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum BackendArg {
    Lexicon,
    Reference,
    Tfidf,
    Adapter,
}

#[derive(Args, Debug)]
struct AdapterArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Command launching an adapter process.
    #[arg(long)]
    adapter_cmd: Option<String>,
    /// Per-request adapter timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args, Debug)]
struct AspectsArgs {
    #[command(flatten)]
    subset: SubsetArg,
    #[arg(long)]
    topic: Option<String>,
    /// Minimum number of distinct threads an entity must occur in.
    #[arg(long)]
    min_count: Option<usize>,
    #[command(flatten)]
    adapter: AdapterArgs,
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// Topic file, or the name of a topic stored in the workspace.
    #[arg(long)]
    topic: String,
    /// Also write T_gt<N> with threads of more than N posts.
    #[arg(long)]
    min_posts: Vec<usize>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    subset: SubsetArg,
    #[arg(long)]
    topic: Option<String>,
    #[command(flatten)]
    adapter: AdapterArgs,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[command(flatten)]
    subset: SubsetArg,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Count unclustered arguments as clusters of one.
    #[arg(long)]
    counted_singletons: Option<bool>,
    #[command(flatten)]
    adapter: AdapterArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Components,
    Strict,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    subset: SubsetArg,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct StanceArgs {
    #[command(flatten)]
    subset: SubsetArg,
    /// Count reply pairs regardless of aspect.
    #[arg(long)]
    any_aspect: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    subset: SubsetArg,
    /// Thread to export; repeatable. Defaults to every thread of the subset.
    #[arg(long)]
    thread: Vec<String>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Gexf,
    Dot,
    Json,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    subset: SubsetArg,
    /// Gold labels, one ArgumentLabel per line.
    #[arg(long)]
    gold: PathBuf,
    /// Bootstrap resamples for a macro-F1 interval.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("cannot size worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::MissingPrerequisite { .. } => 2,
                Error::Backend(_) | Error::Capability { .. } => 3,
                _ => 1,
            })
        }
    }
}

/// Flag value, else workspace setting, else default.
fn pick<T: DeserializeOwned>(
    flag: Option<T>,
    config: &WorkspaceConfig,
    key: &str,
    default: T,
) -> T {
    flag.or_else(|| config.setting(key)).unwrap_or(default)
}

fn subset_label(ws: &Workspace, config: &WorkspaceConfig, arg: &SubsetArg) -> CliResult<String> {
    let flag = arg.subset.clone().or_else(|| config.setting("subset"));
    Ok(pipeline::active_subset_label(ws, flag.as_deref())?)
}

fn adapter(args: &AdapterArgs, config: &WorkspaceConfig) -> CliResult<AdapterClient> {
    let cmd = args
        .adapter_cmd
        .clone()
        .or_else(|| config.setting("adapter_cmd"))
        .ok_or_else(|| CliError::Usage("--backend adapter needs --adapter-cmd".into()))?;
    let secs = pick(
        args.timeout,
        config,
        "timeout",
        DEFAULT_TIMEOUT.as_secs_f64(),
    );
    if !(secs > 0.0 && secs.is_finite()) {
        return Err(CliError::Usage(format!("timeout {secs} must be positive")));
    }
    Ok(AdapterClient::spawn(&cmd, Duration::from_secs_f64(secs))?)
}

fn backend_choice(
    args: &AdapterArgs,
    config: &WorkspaceConfig,
    reference: BackendArg,
) -> CliResult<bool> {
    match pick(args.backend, config, "backend", reference) {
        BackendArg::Adapter => Ok(true),
        b if b == reference || b == BackendArg::Reference => Ok(false),
        b => Err(CliError::Usage(format!(
            "backend {b:?} does not fit this stage"
        ))),
    }
}

fn run(cli: Cli) -> CliResult {
    let ws = Workspace::new(&cli.workspace);
    let config = ws.config_or_default()?;
    match cli.command {
        Command::Ingest(a) => {
            let mut field_overrides = Vec::new();
            for m in &a.map {
                let (f, s) = m.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--map expects FIELD=SOURCE, got `{m}`"))
                })?;
                field_overrides.push((f.to_string(), s.to_string()));
            }
            let opts = IngestOptions {
                salt: a.salt,
                orphan_policy: a.orphan_policy.map(|p| match p {
                    OrphanArg::AttachRoot => OrphanPolicy::AttachRoot,
                    OrphanArg::Drop => OrphanPolicy::Drop,
                }),
                field_overrides,
            };
            let s = pipeline::run_ingest(&ws, &a.input, &opts)?;
            println!(
                "records {}, new posts {}, skipped {} (malformed {}, missing fields {}, duplicates {}, extra roots {}), orphans {}, dropped orphans {}; store holds {} posts in {} threads",
                s.records_in, s.posts_in, s.skipped(), s.malformed, s.missing_fields, s.duplicates,
                s.extra_roots, s.orphans, s.dropped_orphans, s.posts_total, s.threads
            );
        }
        Command::Filter(a) => {
            let min_posts = if a.min_posts.is_empty() {
                config
                    .setting::<Vec<usize>>("min_posts")
                    .unwrap_or_default()
            } else {
                a.min_posts
            };
            let out = pipeline::run_filter(&ws, &a.topic, &min_posts)?;
            for (label, n) in out.subsets {
                println!("{label}: {n} threads");
            }
        }
        Command::Aspects(a) => {
            let subset = a.subset.subset.clone().or_else(|| config.setting("subset"));
            let min_count = pick(a.min_count, &config, "min_count", 2);
            let found = if backend_choice(&a.adapter, &config, BackendArg::Reference)? {
                let client = adapter(&a.adapter, &config)?;
                pipeline::run_aspects(
                    &ws,
                    a.topic.as_deref(),
                    subset.as_deref(),
                    min_count,
                    &client,
                )?
            } else {
                pipeline::run_aspects(
                    &ws,
                    a.topic.as_deref(),
                    subset.as_deref(),
                    min_count,
                    &ReferenceNer::new(),
                )?
            };
            println!("{} new aspects", found.len());
            for asp in found {
                println!("{}", asp.name);
            }
        }
        Command::Classify(a) => {
            let label = subset_label(&ws, &config, &a.subset)?;
            let topic = a.topic.clone().or_else(|| config.setting("topic"));
            let n = if backend_choice(&a.adapter, &config, BackendArg::Lexicon)? {
                let client = adapter(&a.adapter, &config)?;
                pipeline::run_classify(&ws, &label, topic.as_deref(), &client)?
            } else {
                let lex = LexiconClassifier::new(&Lexicons::load_or_init(&ws)?);
                pipeline::run_classify(&ws, &label, topic.as_deref(), &lex)?
            };
            println!("{label}: {n} posts labeled");
        }
        Command::Cluster(a) => {
            let label = subset_label(&ws, &config, &a.subset)?;
            let threshold = pick(a.threshold, &config, "threshold", DEFAULT_THRESHOLD);
            if !(0.0..=1.0).contains(&threshold) {
                return Err(CliError::Usage(format!(
                    "threshold {threshold} outside [0, 1]"
                )));
            }
            let mode = match pick(a.mode, &config, "mode", ModeArg::Components) {
                ModeArg::Components => ClusterMode::Components,
                ModeArg::Strict => ClusterMode::Strict,
            };
            let opts = ClusterOptions {
                threshold,
                mode,
                counted_singletons: pick(a.counted_singletons, &config, "counted_singletons", true),
            };
            let out = if backend_choice(&a.adapter, &config, BackendArg::Tfidf)? {
                let client = adapter(&a.adapter, &config)?;
                pipeline::run_cluster(&ws, &label, &client, opts)?
            } else {
                pipeline::run_cluster(&ws, &label, &TfidfSimilarity::new(), opts)?
            };
            let clusters: usize = out.threads.values().map(|s| s.clusters.len()).sum();
            let singletons: usize = out.threads.values().map(|s| s.singletons.len()).sum();
            println!(
                "{label}: {clusters} multi-member clusters, {singletons} unclustered arguments over {} threads",
                out.threads.len()
            );
        }
        Command::Metrics(a) => {
            let label = subset_label(&ws, &config, &a.subset)?;
            let d = PostRankConfig::default();
            let pr = PostRankConfig {
                damping: pick(a.damping, &config, "damping", d.damping),
                tol: pick(a.tol, &config, "tol", d.tol),
                max_iter: pick(a.max_iter, &config, "max_iter", d.max_iter),
            };
            if !(0.0..1.0).contains(&pr.damping) {
                return Err(CliError::Usage(format!(
                    "damping {} outside [0, 1)",
                    pr.damping
                )));
            }
            let out = pipeline::run_metrics(&ws, &label, &pr)?;
            let unconverged = out.postrank.values().filter(|r| !r.converged).count();
            println!(
                "{label}: metrics for {} threads, {unconverged} without PostRank convergence",
                out.metrics.len()
            );
        }
        Command::Dis(a) => {
            let label = subset_label(&ws, &config, &a)?;
            let p = pipeline::run_dis(&ws, &label)?;
            println!(
                "{label}: {} profiles, {} threads skipped",
                p.profiles.len(),
                p.skipped.len()
            );
        }
        Command::Stance(a) => {
            let label = subset_label(&ws, &config, &a.subset)?;
            let same = !a.any_aspect && config.setting::<bool>("same_aspect_only").unwrap_or(true);
            let t = pipeline::run_stance(&ws, &label, same)?;
            use agora_core::backends::Stance::{Against, For};
            for parent in [For, Against] {
                let fmt = |c| {
                    t.probability(c, parent)
                        .map_or("undefined".to_string(), |p| format!("{p:.4}"))
                };
                println!(
                    "P(For|{parent}) = {}, P(Against|{parent}) = {}",
                    fmt(For),
                    fmt(Against)
                );
            }
        }
        Command::Export(a) => {
            let label = subset_label(&ws, &config, &a.subset)?;
            let format = match pick(a.format, &config, "format", FormatArg::Gexf) {
                FormatArg::Gexf => ExportFormat::Gexf,
                FormatArg::Dot => ExportFormat::Dot,
                FormatArg::Json => ExportFormat::Json,
            };
            let paths =
                pipeline::run_export(&ws, &label, &a.thread, format, &PostRankConfig::default())?;
            println!("{} exports written", paths.len());
        }
        Command::Report(a) => {
            let label = subset_label(&ws, &config, &a)?;
            let summary = pipeline::run_report(&ws, &label)?;
            print!("{}", summary.to_markdown());
        }
        Command::Eval(a) => {
            let label = subset_label(&ws, &config, &a.subset)?;
            let r = pipeline::run_eval(&ws, &label, &a.gold, a.bootstrap.map(|n| (n, a.seed)))?;
            println!(
                "n = {}, macro F1 = {:.4}, kappa = {:.4}",
                r.n, r.f1.macro_f1, r.kappa
            );
            for (stance, s) in &r.f1.per_class {
                println!(
                    "{stance}: P = {:.4}, R = {:.4}, F1 = {:.4}",
                    s.precision, s.recall, s.f1
                );
            }
            if let Some((lo, hi)) = r.macro_f1_interval {
                println!("macro F1 95% interval [{lo:.4}, {hi:.4}] (seed {})", a.seed);
            }
        }
    }
    Ok(())
}

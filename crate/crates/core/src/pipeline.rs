//! Workspace stages. Each reads the outputs of earlier stages and fails with
//! [`Error::MissingPrerequisite`] naming the stage to run when they are
//! absent. Every stage is deterministic and overwrites its outputs.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::eval::{bootstrap_macro_f1, eval_f1, eval_kappa, F1Report};
use crate::backends::{
    detect_aspects, ArgumentLabel, EntityRecognizer, SimilarityBackend, StanceClassifier,
};
use crate::clustering::{cluster_with_backend, ClusterMode, ClusterSet};
use crate::corpus::{ingest, Corpus, IngestStats, Post};
use crate::deliberation::{profile_subset, DeliberationProfile, SubsetProfiles};
use crate::error::{Error, Result};
use crate::relevance::{
    filter_by_min_posts, select_threads, subset_label, Aspect, ThreadSubset, TopicConfig,
};
use crate::report::{self, ExportFormat, GraphExport, SummaryReport};
use crate::threadgraph::{
    build_graph, compute_metrics, postrank, stance_dependence, PostRankConfig, PostRankResult,
    StanceTransitionTable, ThreadGraph, ThreadMetrics,
};
use crate::workspace::{
    read_json, read_jsonl, require, write_atomic, write_json, write_jsonl, OrphanPolicy, Workspace,
};

/// Config key naming the active topic, recorded by `filter`.
pub const TOPIC_SETTING: &str = "topic";

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub salt: Option<String>,
    pub orphan_policy: Option<OrphanPolicy>,
    /// `(field, source)` renames applied to the field mapping.
    pub field_overrides: Vec<(String, String)>,
}

/// Ingests a dump file. A missing salt is generated once and stored; a salt
/// that contradicts the stored one is refused, since it would split authors.
pub fn run_ingest(ws: &Workspace, input: &Path, opts: &IngestOptions) -> Result<IngestStats> {
    let mut config = ws.config_or_default()?;
    match (&opts.salt, config.salt.is_empty()) {
        (Some(s), true) => config.salt = s.clone(),
        (Some(s), false) if *s != config.salt => {
            return Err(Error::Invalid(
                "--salt differs from the salt stored in config.json".into(),
            ))
        }
        (None, true) => {
            let mut bytes = [0u8; 16];
            rand::thread_rng().fill_bytes(&mut bytes);
            config.salt = bytes.iter().map(|b| format!("{b:02x}")).collect();
        }
        _ => {}
    }
    if let Some(p) = opts.orphan_policy {
        config.orphan_policy = p;
    }
    for (field, source) in &opts.field_overrides {
        config.field_mapping.set(field, source)?;
    }
    ws.save_config(&config)?;
    let file = File::open(input).map_err(|e| Error::io(input, e))?;
    ingest(ws, BufReader::new(file), config.orphan_policy)
}

fn load_corpus(ws: &Workspace) -> Result<Corpus> {
    require(ws.posts_path(), "ingest")?;
    require(ws.threads_path(), "ingest")?;
    Corpus::load(ws)
}

/// Loads a topic from a file path or by name from `ws/topics/`.
pub fn load_topic(ws: &Workspace, topic: &str) -> Result<TopicConfig> {
    let as_path = Path::new(topic);
    let path = if as_path.extension().is_some() || as_path.components().count() > 1 {
        as_path.to_path_buf()
    } else {
        ws.topic_path(topic)
    };
    if !path.exists() {
        return Err(Error::NotFound {
            kind: "topic",
            id: path.display().to_string(),
        });
    }
    read_json::<TopicConfig>(&path)?.normalized()
}

/// The topic named by `flag`, else the one recorded by `filter`.
pub fn active_topic(ws: &Workspace, flag: Option<&str>) -> Result<TopicConfig> {
    let name = match flag {
        Some(t) => t.to_string(),
        None => ws
            .config_or_default()?
            .setting::<String>(TOPIC_SETTING)
            .ok_or_else(|| Error::MissingPrerequisite {
                stage: "filter",
                path: ws.path("subsets"),
            })?,
    };
    load_topic(ws, &name)
}

/// The subset named by `flag`, else `T_<active topic>`.
pub fn active_subset_label(ws: &Workspace, flag: Option<&str>) -> Result<String> {
    match flag {
        Some(s) => Ok(s.to_string()),
        None => Ok(subset_label(&active_topic(ws, None)?)),
    }
}

pub fn load_subset(ws: &Workspace, label: &str) -> Result<ThreadSubset> {
    read_json(&require(ws.subset_path(label), "filter")?)
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterOutcome {
    pub topic: String,
    pub subsets: Vec<(String, usize)>,
}

/// Selects topic-relevant threads into `T_<topic>` and, per entry of
/// `min_posts`, a nested `T_gt<N>`. The topic is stored in the workspace and
/// recorded as active.
pub fn run_filter(ws: &Workspace, topic: &str, min_posts: &[usize]) -> Result<FilterOutcome> {
    let corpus = load_corpus(ws)?;
    let topic = load_topic(ws, topic)?;
    write_json(&ws.topic_path(&topic.topic_name), &topic)?;
    let mut config = ws.config_or_default()?;
    config
        .settings
        .insert(TOPIC_SETTING.into(), topic.topic_name.clone().into());
    ws.save_config(&config)?;

    let base = select_threads(&corpus, &topic);
    write_json(&ws.subset_path(&base.label), &base)?;
    let mut subsets = vec![(base.label.clone(), base.len())];
    let mut sorted = min_posts.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for n in sorted {
        let s = filter_by_min_posts(&base, &corpus, n, format!("T_gt{n}"));
        write_json(&ws.subset_path(&s.label), &s)?;
        subsets.push((s.label.clone(), s.len()));
    }
    Ok(FilterOutcome {
        topic: topic.topic_name,
        subsets,
    })
}

/// Discovers aspects among the root posts of the subset and merges them
/// into the stored topic. Returns the newly added aspects.
pub fn run_aspects<N: EntityRecognizer + ?Sized>(
    ws: &Workspace,
    topic_flag: Option<&str>,
    subset_flag: Option<&str>,
    min_count: usize,
    ner: &N,
) -> Result<Vec<Aspect>> {
    let corpus = load_corpus(ws)?;
    let mut topic = active_topic(ws, topic_flag)?;
    let label = match subset_flag {
        Some(s) => s.to_string(),
        None => subset_label(&topic),
    };
    let subset = load_subset(ws, &label)?;
    let roots: Vec<Post> = corpus
        .posts
        .iter()
        .filter(|p| p.is_root && subset.thread_ids.contains(&p.thread_id))
        .cloned()
        .collect();
    let known: Vec<String> = topic
        .topic_keywords
        .iter()
        .chain(topic.aspects.iter().flat_map(|a| a.keywords.iter()))
        .cloned()
        .collect();
    let found: Vec<Aspect> = detect_aspects(&roots, min_count, ner)?
        .into_iter()
        .filter(|a| !a.keywords.iter().any(|k| known.contains(k)))
        .collect();
    let before: Vec<String> = topic
        .aspects
        .iter()
        .map(|a| a.name.to_lowercase())
        .collect();
    topic.merge_aspects(found.clone());
    write_json(&ws.topic_path(&topic.topic_name), &topic)?;
    Ok(found
        .into_iter()
        .filter(|a| !before.contains(&a.name.to_lowercase()))
        .collect())
}

fn subset_posts<'a>(corpus: &'a Corpus, subset: &ThreadSubset) -> Vec<&'a Post> {
    corpus
        .posts
        .iter()
        .filter(|p| subset.thread_ids.contains(&p.thread_id))
        .collect()
}

/// Labels every post of the subset. On a backend failure the labels for
/// the processed prefix are still written before the error is returned.
pub fn run_classify<C: StanceClassifier + ?Sized>(
    ws: &Workspace,
    subset_label: &str,
    topic_flag: Option<&str>,
    classifier: &C,
) -> Result<usize> {
    let corpus = load_corpus(ws)?;
    let subset = load_subset(ws, subset_label)?;
    let topic = active_topic(ws, topic_flag)?;
    let posts: Vec<Post> = subset_posts(&corpus, &subset)
        .into_iter()
        .cloned()
        .collect();
    let partial = ws.labels_path(subset_label).with_extension("partial.jsonl");
    match classifier.classify(&posts, &topic.labeling_aspects()) {
        Ok(labels) => {
            write_jsonl(&ws.labels_path(subset_label), &labels)?;
            if partial.exists() {
                fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
            }
            Ok(labels.len())
        }
        Err(Error::Backend(crate::error::BackendError::Batch {
            processed,
            failed_ids,
            source,
        })) => {
            write_jsonl(&partial, &processed)?;
            Err(Error::Backend(crate::error::BackendError::Batch {
                processed,
                failed_ids,
                source,
            }))
        }
        Err(e) => Err(e),
    }
}

pub fn load_labels(ws: &Workspace, subset_label: &str) -> Result<Vec<ArgumentLabel>> {
    read_jsonl(&require(ws.labels_path(subset_label), "classify")?)
}

fn label_map(labels: Vec<ArgumentLabel>) -> HashMap<String, ArgumentLabel> {
    labels.into_iter().map(|l| (l.post_id.clone(), l)).collect()
}

/// Per-thread cluster sets of a subset, as stored in `ws/clusters/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetClusters {
    pub subset: String,
    pub mode: ClusterMode,
    pub threshold: f64,
    pub counted_singletons: bool,
    pub backend_id: String,
    pub threads: BTreeMap<String, ClusterSet>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    pub threshold: f64,
    pub mode: ClusterMode,
    pub counted_singletons: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            threshold: crate::clustering::DEFAULT_THRESHOLD,
            mode: ClusterMode::default(),
            counted_singletons: true,
        }
    }
}

fn threads_of(corpus: &Corpus, subset: &ThreadSubset) -> Result<Vec<(String, Vec<Post>)>> {
    subset
        .thread_ids
        .iter()
        .map(|t| corpus.load_thread(t).map(|(_, posts)| (t.clone(), posts)))
        .collect()
}

/// Clusters each thread's arguments separately.
pub fn run_cluster<S: SimilarityBackend + Sync + ?Sized>(
    ws: &Workspace,
    subset_label: &str,
    backend: &S,
    opts: ClusterOptions,
) -> Result<SubsetClusters> {
    let corpus = load_corpus(ws)?;
    let subset = load_subset(ws, subset_label)?;
    let labels = label_map(load_labels(ws, subset_label)?);
    let threads = threads_of(&corpus, &subset)?;
    let sets = threads
        .par_iter()
        .map(|(tid, posts)| {
            let thread_labels: Vec<ArgumentLabel> = posts
                .iter()
                .filter_map(|p| labels.get(&p.post_id).cloned())
                .collect();
            let texts: HashMap<String, String> = posts
                .iter()
                .map(|p| (p.post_id.clone(), p.text()))
                .collect();
            let mut set =
                cluster_with_backend(&thread_labels, &texts, backend, opts.threshold, opts.mode)?;
            set.counted_singletons = opts.counted_singletons;
            Ok((tid.clone(), set))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = SubsetClusters {
        subset: subset_label.to_string(),
        mode: opts.mode,
        threshold: opts.threshold,
        counted_singletons: opts.counted_singletons,
        backend_id: backend.handle().backend_id.clone(),
        threads: sets.into_iter().collect(),
    };
    write_json(&ws.clusters_path(subset_label), &out)?;
    Ok(out)
}

pub fn load_clusters(ws: &Workspace, subset_label: &str) -> Result<SubsetClusters> {
    read_json(&require(ws.clusters_path(subset_label), "cluster")?)
}

fn graphs_of(corpus: &Corpus, subset: &ThreadSubset) -> Result<Vec<ThreadGraph>> {
    let threads = threads_of(corpus, subset)?;
    threads
        .par_iter()
        .map(|(tid, posts)| build_graph(tid, posts))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MetricsOutcome {
    pub metrics: Vec<ThreadMetrics>,
    pub postrank: BTreeMap<String, PostRankResult>,
}

/// Structural metrics and PostRank per thread.
pub fn run_metrics(
    ws: &Workspace,
    subset_label: &str,
    config: &PostRankConfig,
) -> Result<MetricsOutcome> {
    let corpus = load_corpus(ws)?;
    let subset = load_subset(ws, subset_label)?;
    let labels = label_map(load_labels(ws, subset_label)?);
    let graphs = graphs_of(&corpus, &subset)?;
    let results: Vec<(ThreadMetrics, PostRankResult)> = graphs
        .par_iter()
        .map(|g| (compute_metrics(g, &labels), postrank(g, config)))
        .collect();
    let rows = results.iter().map(|(m, _)| {
        vec![
            m.thread_id.clone(),
            m.n_posts.to_string(),
            m.n_argumentative.to_string(),
            m.depth.to_string(),
            m.fan_out.to_string(),
            m.sub_threads.to_string(),
            format!("{}", m.avg_degree),
        ]
    });
    let csv = report::csv_string(
        &[
            "thread_id",
            "n_posts",
            "n_argumentative",
            "depth",
            "fan_out",
            "sub_threads",
            "avg_degree",
        ],
        rows,
    )?;
    write_atomic(&ws.metrics_path("threads.csv"), csv.as_bytes())?;
    let (metrics, ranks): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let postrank: BTreeMap<String, PostRankResult> = metrics
        .iter()
        .map(|m| m.thread_id.clone())
        .zip(ranks)
        .collect();
    write_json(&ws.metrics_path("postrank.json"), &postrank)?;
    Ok(MetricsOutcome { metrics, postrank })
}

pub fn run_stance(
    ws: &Workspace,
    subset_label: &str,
    same_aspect_only: bool,
) -> Result<StanceTransitionTable> {
    let corpus = load_corpus(ws)?;
    let subset = load_subset(ws, subset_label)?;
    let labels = label_map(load_labels(ws, subset_label)?);
    let graphs = graphs_of(&corpus, &subset)?;
    let table = stance_dependence(graphs.iter(), &labels, same_aspect_only);
    write_json(&ws.metrics_path("stance_dependence.json"), &table)?;
    Ok(table)
}

fn profiles(
    ws: &Workspace,
    subset_label: &str,
) -> Result<(Corpus, Vec<ArgumentLabel>, SubsetProfiles)> {
    let corpus = load_corpus(ws)?;
    let subset = load_subset(ws, subset_label)?;
    let labels = load_labels(ws, subset_label)?;
    let clusters = load_clusters(ws, subset_label)?;
    let thread_posts: HashMap<String, Vec<String>> = subset
        .thread_ids
        .iter()
        .filter_map(|t| corpus.thread_post_ids(t).map(|ids| (t.clone(), ids)))
        .collect();
    let map = label_map(labels.clone());
    let set_map: HashMap<String, ClusterSet> = clusters.threads.into_iter().collect();
    let p = profile_subset(&subset, &thread_posts, &map, &set_map)?;
    Ok((corpus, labels, p))
}

/// DIS per thread plus its CCDF.
pub fn run_dis(ws: &Workspace, subset_label: &str) -> Result<SubsetProfiles> {
    let (_, _, p) = profiles(ws, subset_label)?;
    if !p.skipped.is_empty() {
        log::warn!(
            "{} threads skipped for missing labels or clusters",
            p.skipped.len()
        );
    }
    let rows = p.profiles.iter().map(|d| {
        vec![
            d.thread_id.clone(),
            d.n_posts.to_string(),
            d.n_arguments.to_string(),
            d.n_clusters.to_string(),
            format!("{}", d.d_cluster),
            format!("{}", d.d_arg),
            format!("{}", d.sigma1),
            format!("{}", d.sigma2),
            format!("{}", d.dis),
        ]
    });
    let csv = report::csv_string(
        &[
            "thread_id",
            "n_posts",
            "n_arguments",
            "n_clusters",
            "d_cluster",
            "d_arg",
            "sigma1",
            "sigma2",
            "dis",
        ],
        rows,
    )?;
    write_atomic(&ws.metrics_path("deliberation.csv"), csv.as_bytes())?;
    write_atomic(&ws.report_path("dis_ccdf.csv"), ccdf_csv(&p)?.as_bytes())?;
    Ok(p)
}

fn ccdf_csv(p: &SubsetProfiles) -> Result<String> {
    report::csv_string(
        &["x", "ccdf"],
        p.ccdf
            .iter()
            .map(|c| vec![format!("{:.2}", c.x), format!("{}", c.ccdf)]),
    )
}

/// Exports the given threads, or every thread of the subset.
pub fn run_export(
    ws: &Workspace,
    subset_label: &str,
    thread_ids: &[String],
    format: ExportFormat,
    config: &PostRankConfig,
) -> Result<Vec<String>> {
    let corpus = load_corpus(ws)?;
    let labels = label_map(load_labels(ws, subset_label)?);
    let ids: Vec<String> = if thread_ids.is_empty() {
        load_subset(ws, subset_label)?
            .thread_ids
            .into_iter()
            .collect()
    } else {
        thread_ids.to_vec()
    };
    ids.par_iter()
        .map(|tid| {
            let (_, posts) = corpus.load_thread(tid)?;
            let g = build_graph(tid, &posts)?;
            let pr = postrank(&g, config);
            let text = GraphExport::build(&g, &labels, Some(&pr)).render(format);
            let path = ws.export_path(tid, format.extension());
            write_atomic(&path, text.as_bytes())?;
            Ok(path.display().to_string())
        })
        .collect()
}

/// Distribution tables and the corpus summary.
pub fn run_report(ws: &Workspace, subset_label: &str) -> Result<SummaryReport> {
    let (corpus, labels, p) = profiles(ws, subset_label)?;
    let subset = load_subset(ws, subset_label)?;
    let map = label_map(labels.clone());
    let posts: Vec<Post> = subset_posts(&corpus, &subset)
        .into_iter()
        .cloned()
        .collect();

    let write = |name: &str, body: String| write_atomic(&ws.report_path(name), body.as_bytes());
    write(
        "length_ccdf.csv",
        report::length_ccdf(&posts, &map).to_csv()?,
    )?;
    write(
        "upvote_dist.csv",
        report::upvote_distribution(&posts, &map).to_csv()?,
    )?;
    let histogram = report::stance_histogram(&labels);
    write("stance_histogram.csv", histogram.to_csv()?)?;
    write("dis_ccdf.csv", ccdf_csv(&p)?)?;
    match report::args_vs_size(&p.profiles) {
        Ok(scatter) => {
            write("args_vs_size.csv", scatter.table.to_csv()?)?;
            write_json(
                &ws.report_path("args_vs_size_fit.json"),
                &FitReport::from(&scatter),
            )?;
        }
        Err(e) => log::warn!("args_vs_size skipped: {e}"),
    }

    let graphs = graphs_of(&corpus, &subset)?;
    let metrics: Vec<ThreadMetrics> = graphs.iter().map(|g| compute_metrics(g, &map)).collect();
    let summary = SummaryReport {
        subset: subset_label.to_string(),
        arguments: report::ArgumentBreakdown::from_histogram(&histogram),
        graphs: report::GraphProperties::from_metrics(&metrics),
        dis: report::DisShares::from_profiles(&p.profiles),
    };
    write_json(&ws.report_path("summary.json"), &summary)?;
    write("summary.md", summary.to_markdown())?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
struct FitReport {
    arguments: Option<report::LinearFit>,
    dis: Option<report::LinearFit>,
}

impl From<&report::ArgsVsSize> for FitReport {
    fn from(s: &report::ArgsVsSize) -> Self {
        FitReport {
            arguments: s.arguments_fit,
            dis: s.dis_fit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub f1: F1Report,
    pub kappa: f64,
    /// Percentile interval of macro F1 when bootstrapping was requested.
    pub macro_f1_interval: Option<(f64, f64)>,
    pub seed: Option<u64>,
}

/// Scores the subset's labels against a gold file. Only gold posts are
/// scored; every gold post must have a predicted label.
pub fn run_eval(
    ws: &Workspace,
    subset_label: &str,
    gold_path: &Path,
    bootstrap: Option<(usize, u64)>,
) -> Result<EvalReport> {
    let predicted = label_map(load_labels(ws, subset_label)?);
    let gold: Vec<ArgumentLabel> = read_jsonl(gold_path)?;
    let pred = gold
        .iter()
        .map(|g| {
            predicted
                .get(&g.post_id)
                .cloned()
                .ok_or_else(|| Error::NotFound {
                    kind: "predicted label",
                    id: g.post_id.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let f1 = eval_f1(&pred, &gold)?;
    let kappa = eval_kappa(&pred, &gold)?;
    let macro_f1_interval = match bootstrap {
        Some((n, seed)) => Some(bootstrap_macro_f1(&pred, &gold, n, 0.95, seed)?),
        None => None,
    };
    let report = EvalReport {
        n: gold.len(),
        f1,
        kappa,
        macro_f1_interval,
        seed: bootstrap.map(|b| b.1),
    };
    write_json(
        &ws.report_path(&format!("eval_{subset_label}.json")),
        &report,
    )?;
    Ok(report)
}

pub fn load_profiles(ws: &Workspace, subset_label: &str) -> Result<Vec<DeliberationProfile>> {
    Ok(profiles(ws, subset_label)?.2.profiles)
}

//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use agora_core::backends::eval::{eval_f1, eval_kappa};
use agora_core::backends::{ArgumentLabel, SimilarityMatrix, Stance};
use agora_core::clustering::{cluster_arguments, strict_groups, ClusterMode};
use agora_core::deliberation::dis;
use agora_core::report::{validate_gexf, GraphExport};
use agora_core::threadgraph::{
    compute_metrics, postrank, stance_dependence, PostRankConfig, ThreadGraph,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn label(id: &str, aspect: Option<&str>, stance: Stance) -> ArgumentLabel {
    ArgumentLabel {
        post_id: id.to_string(),
        aspect: aspect.map(str::to_string),
        stance,
        confidence: 1.0,
        backend_id: "fixture".into(),
    }
}

fn tree(thread: &str, parents: &[Option<usize>]) -> ThreadGraph {
    let ids: Vec<String> = (0..parents.len()).map(|i| format!("{thread}{i}")).collect();
    let ps: Vec<Option<String>> = parents.iter().map(|p| p.map(|j| ids[j].clone())).collect();
    ThreadGraph::from_parents(thread, ids, &ps).expect("valid tree")
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct evaluation of the score from its definition.
fn dis_oracle(p: usize, a: usize, c: usize) -> f64 {
    let d_cluster = if a == 0 { 0.0 } else { c as f64 / a as f64 };
    let d_arg = a as f64 / p as f64;
    let (w1, w2) = (sigmoid(a as f64), sigmoid(p as f64));
    (w1 * d_cluster + w2 * d_arg) / (w1 + w2)
}

fn random_triple(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let p = rng.gen_range(1..=300);
    let a = rng.gen_range(0..=p);
    let c = rng.gen_range(0..=a);
    (p, a, c)
}

fn criterion_1() -> Outcome {
    let worked = dis(10, 4, 2).map_err(|e| e.to_string())?.dis;
    ensure((worked - 0.449547).abs() <= 1e-6, || {
        format!("dis(10,4,2) = {worked}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (p, a, c) = random_triple(&mut rng);
        let got = dis(p, a, c)
            .map_err(|e| format!("dis({p},{a},{c}): {e}"))?
            .dis;
        let err = (got - dis_oracle(p, a, c)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("dis({p},{a},{c}) off by {err:e}"))?;
    }
    Ok(format!(
        "dis(10,4,2) = {worked:.6}; 1000 triples, max error {worst:.1e}"
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..300 {
        let p = rng.gen_range(1..=200usize);
        let a = rng.gen_range(0..=p);
        let mut prev = f64::NEG_INFINITY;
        for c in 0..=a {
            let r = dis(p, a, c).map_err(|e| e.to_string())?;
            ensure((0.0..=1.0).contains(&r.dis), || {
                format!("dis({p},{a},{c}) = {}", r.dis)
            })?;
            ensure((r.sigma1 + r.sigma2 - 1.0).abs() <= 1e-12, || {
                format!("weights at ({p},{a},{c})")
            })?;
            ensure(r.dis >= prev, || format!("decrease at ({p},{a},{c})"))?;
            prev = r.dis;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} triples within bounds, weights sum to 1, monotone in clusters"
    ))
}

/// Breadth-first components over the threshold graph, as sorted groups.
fn bfs_components(sim: &SimilarityMatrix, threshold: f64) -> BTreeSet<Vec<usize>> {
    let n = sim.len();
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        let mut group = Vec::new();
        while let Some(u) = queue.pop_front() {
            group.push(u);
            for (v, seen_v) in seen.iter_mut().enumerate() {
                if !*seen_v && v != u && sim.get(u, v) >= threshold {
                    *seen_v = true;
                    queue.push_back(v);
                }
            }
        }
        group.sort_unstable();
        out.insert(group);
    }
    out
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..500 {
        let n = rng.gen_range(1..=10usize);
        let threshold = rng.gen_range(0.5..0.95);
        let sim = SimilarityMatrix::from_fn(n, |_, _| (rng.gen_range(0..=20) as f64) / 20.0);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
        let labels: Vec<ArgumentLabel> = ids
            .iter()
            .map(|id| label(id, Some("x"), Stance::For))
            .collect();
        let refs: Vec<&ArgumentLabel> = labels.iter().collect();
        let set = cluster_arguments(&refs, &sim, threshold, ClusterMode::Components)
            .map_err(|e| e.to_string())?;
        let index: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut got: BTreeSet<Vec<usize>> = set
            .clusters
            .iter()
            .map(|c| {
                let mut g: Vec<usize> = c
                    .member_post_ids
                    .iter()
                    .map(|m| index[m.as_str()])
                    .collect();
                g.sort_unstable();
                g
            })
            .collect();
        got.extend(set.singletons.iter().map(|s| vec![index[s.as_str()]]));
        let want = bfs_components(&sim, threshold);
        ensure(got == want, || format!("case {case}: {got:?} != {want:?}"))?;
    }
    // A~B, C~D, then B~C: the strict rule keeps the two clusters apart.
    let strict = strict_groups(4, [(0, 1, 0.9), (2, 3, 0.9), (1, 2, 0.9)], 0.75);
    let strict: BTreeSet<Vec<usize>> = strict.into_iter().collect();
    ensure(strict == BTreeSet::from([vec![0, 1], vec![2, 3]]), || {
        format!("strict witness gave {strict:?}")
    })?;
    let sim = SimilarityMatrix::from_fn(4, |i, j| {
        if (i, j) == (0, 1) || (i, j) == (2, 3) || (i, j) == (1, 2) {
            0.9
        } else {
            0.1
        }
    });
    let merged = bfs_components(&sim, 0.75);
    ensure(merged.len() == 1, || {
        "components witness should merge".into()
    })?;
    Ok("500 random instances match BFS components; strict witness keeps {A,B},{C,D} apart".into())
}

fn criterion_4() -> Outcome {
    let parents = [
        None,
        Some(0),
        Some(1),
        Some(2),
        Some(3),
        Some(4),
        Some(5),
        Some(6),
        Some(0),
        Some(1),
        Some(9),
        Some(2),
        Some(3),
        Some(12),
        Some(4),
        Some(5),
        Some(15),
        Some(10),
    ];
    let g = tree("f", &parents);
    let annotated: [(usize, &str, Stance); 13] = [
        (0, "Monsanto", Stance::None),
        (1, "Monsanto", Stance::Against),
        (2, "Monsanto", Stance::For),
        (3, "Golden Rice", Stance::None),
        (4, "Golden Rice", Stance::For),
        (5, "Glyphosate", Stance::Against),
        (6, "Glyphosate", Stance::None),
        (8, "CRISPR", Stance::For),
        (9, "CRISPR", Stance::None),
        (11, "Monsanto", Stance::Against),
        (12, "Golden Rice", Stance::None),
        (14, "Glyphosate", Stance::Against),
        (16, "CRISPR", Stance::None),
    ];
    let mut labels: HashMap<String, ArgumentLabel> = HashMap::new();
    for (i, aspect, stance) in annotated {
        let id = format!("f{i}");
        labels.insert(id.clone(), label(&id, Some(aspect), stance));
    }
    for i in [7, 10, 13, 15, 17] {
        let id = format!("f{i}");
        labels.insert(id.clone(), label(&id, None, Stance::None));
    }
    let m = compute_metrics(&g, &labels);
    ensure(m.n_posts == 18, || format!("posts {}", m.n_posts))?;
    ensure(m.fan_out == 7, || format!("fan_out {}", m.fan_out))?;
    ensure(m.depth == 7, || format!("depth {}", m.depth))?;
    ensure(m.n_argumentative == 7, || {
        format!("argumentative {}", m.n_argumentative)
    })?;
    let pr = postrank(&g, &PostRankConfig::default());
    let xml = GraphExport::build(&g, &labels, Some(&pr)).to_gexf();
    let summary = validate_gexf(&xml).map_err(|e| e.to_string())?;
    ensure(summary.node_ids.len() == 18, || {
        format!("gexf nodes {}", summary.node_ids.len())
    })?;
    ensure(summary.edge_count == 17, || {
        format!("gexf edges {}", summary.edge_count)
    })?;
    let aspects = summary
        .attribute_values
        .get("aspect")
        .map_or(0, BTreeSet::len);
    ensure(aspects == 4, || format!("gexf aspects {aspects}"))?;
    Ok("fan_out 7, depth 7, 7 argumentative, 4 aspects; GEXF 18 nodes / 17 edges".into())
}

/// Solves the stationary equations directly by Gaussian elimination on the
/// graph with the root removed.
fn postrank_oracle(parents: &[Option<usize>], d: f64) -> BTreeMap<usize, f64> {
    let kept: Vec<usize> = (0..parents.len())
        .filter(|&v| parents[v].is_some())
        .collect();
    let n = kept.len();
    let pos: HashMap<usize, usize> = kept.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    // columns of the transition matrix: node u sends its mass to its parent,
    // or everywhere when its parent is gone
    let mut a = vec![vec![0.0; n + 1]; n];
    for (row, eq) in a.iter_mut().enumerate() {
        eq[row] += 1.0;
        eq[n] = (1.0 - d) / n as f64;
    }
    for (u, &v) in kept.iter().enumerate() {
        match parents[v].and_then(|p| pos.get(&p)) {
            Some(&t) => a[t][u] -= d,
            None => (0..n).for_each(|r| a[r][u] -= d / n as f64),
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot_row[col];
                for (x, p) in row.iter_mut().zip(&pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    kept.iter()
        .enumerate()
        .map(|(i, &v)| (v, a[i][n] / a[i][i]))
        .collect()
}

fn criterion_5() -> Outcome {
    let cfg = PostRankConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.gen_range(2..=30usize);
        let parents: Vec<Option<usize>> = (0..n)
            .map(|i| (i > 0).then(|| rng.gen_range(0..i)))
            .collect();
        let g = tree("t", &parents);
        let got = postrank(&g, &cfg);
        let want = postrank_oracle(&parents, cfg.damping);
        ensure(got.scores.len() == want.len(), || {
            format!("case {case}: retained {}", got.scores.len())
        })?;
        for (v, w) in &want {
            let s = got.scores[&format!("t{v}")];
            worst = worst.max((s - w).abs());
        }
        let total: f64 = got.scores.values().sum();
        ensure((total - 1.0).abs() <= 1e-9, || {
            format!("case {case}: sum {total}")
        })?;
        ensure(
            got.removed_ids == BTreeSet::from(["t0".to_string()]),
            || format!("case {case}: removed {:?}", got.removed_ids),
        )?;
    }
    ensure(worst <= 1e-8, || format!("max deviation {worst:e}"))?;
    for k in [2, 5, 17] {
        let star: Vec<Option<usize>> = (0..=k).map(|i| (i > 0).then_some(0)).collect();
        let r = postrank(&tree("s", &star), &cfg);
        let vals: Vec<f64> = r.scores.values().copied().collect();
        ensure(
            vals.len() == k && vals.iter().all(|&v| v == vals[0]),
            || format!("star {k}: {vals:?}"),
        )?;
    }
    Ok(format!(
        "100 random trees, max deviation {worst:.1e}; stars uniform; sums 1"
    ))
}

fn criterion_6() -> Outcome {
    // one Against root with 59 Against and 41 For replies on the same aspect,
    // one For root with 3 For and 2 Against replies, plus pairs that must be
    // ignored: a None reply and a reply about another aspect
    let mut labels = HashMap::new();
    let mut add = |id: String, aspect: &str, stance| {
        labels.insert(id.clone(), label(&id, Some(aspect), stance));
    };
    let n_a = 1 + 100 + 2;
    let pa: Vec<Option<usize>> = (0..n_a).map(|i| (i > 0).then_some(0)).collect();
    let ga = tree("a", &pa);
    add("a0".into(), "x", Stance::Against);
    for i in 1..=100 {
        add(
            format!("a{i}"),
            "x",
            if i <= 59 {
                Stance::Against
            } else {
                Stance::For
            },
        );
    }
    add("a101".into(), "x", Stance::None);
    add("a102".into(), "y", Stance::Against);
    let pb: Vec<Option<usize>> = (0..6).map(|i| (i > 0).then_some(0)).collect();
    let gb = tree("b", &pb);
    add("b0".into(), "x", Stance::For);
    for i in 1..=5 {
        add(
            format!("b{i}"),
            "x",
            if i <= 3 { Stance::For } else { Stance::Against },
        );
    }
    let t = stance_dependence([&ga, &gb], &labels, true);
    let aa = t
        .probability(Stance::Against, Stance::Against)
        .ok_or("no Against row")?;
    let af = t
        .probability(Stance::For, Stance::Against)
        .ok_or("no Against row")?;
    let ff = t
        .probability(Stance::For, Stance::For)
        .ok_or("no For row")?;
    let fa = t
        .probability(Stance::Against, Stance::For)
        .ok_or("no For row")?;
    ensure(aa == 0.59, || format!("P(Against|Against) = {aa}"))?;
    ensure(t.count(Stance::Against, Stance::Against) == 59, || {
        "count A->A".into()
    })?;
    ensure(t.count(Stance::Against, Stance::For) == 41, || {
        "count A->F".into()
    })?;
    ensure(
        (aa + af - 1.0).abs() <= 1e-12 && (ff + fa - 1.0).abs() <= 1e-12,
        || "rows do not sum to 1".into(),
    )?;
    Ok(format!(
        "P(Against|Against) = {aa}, P(For|Against) = {af}; rows sum to 1"
    ))
}

fn criterion_7() -> Outcome {
    // 20 items: 7 agree For, 7 agree Against, 3 + 3 disagreements.
    // p_o = 0.7, p_e = 0.5*0.5 + 0.5*0.5 = 0.5, kappa = 0.4
    let mut a = Vec::new();
    let mut b = Vec::new();
    let cells = [
        (Stance::For, Stance::For, 7),
        (Stance::For, Stance::Against, 3),
        (Stance::Against, Stance::For, 3),
        (Stance::Against, Stance::Against, 7),
    ];
    for (sa, sb, count) in cells {
        for _ in 0..count {
            let id = format!("p{:02}", a.len());
            a.push(label(&id, Some("x"), sa));
            b.push(label(&id, Some("x"), sb));
        }
    }
    let kappa = eval_kappa(&a, &b).map_err(|e| e.to_string())?;
    ensure((kappa - 0.4).abs() <= 1e-12, || format!("kappa {kappa}"))?;
    let f1 = eval_f1(&a, &b).map_err(|e| e.to_string())?;
    ensure((f1.macro_f1 - 0.7).abs() <= 1e-12, || {
        format!("macro F1 {}", f1.macro_f1)
    })?;

    // three classes with unequal errors: confusion (pred rows, gold cols)
    //            None For Against
    //   None       4   1   0
    //   For        0   3   1
    //   Against    1   0   2
    // F1: None 0.8, For 0.75, Against 2/3
    let mut p = Vec::new();
    let mut g = Vec::new();
    let grid = [
        (Stance::None, Stance::None, 4),
        (Stance::None, Stance::For, 1),
        (Stance::For, Stance::For, 3),
        (Stance::For, Stance::Against, 1),
        (Stance::Against, Stance::None, 1),
        (Stance::Against, Stance::Against, 2),
    ];
    for (sp, sg, count) in grid {
        for _ in 0..count {
            let id = format!("q{:02}", p.len());
            p.push(label(&id, None, sp));
            g.push(label(&id, None, sg));
        }
    }
    let want = (0.8 + 0.75 + 2.0 / 3.0) / 3.0;
    let got = eval_f1(&p, &g).map_err(|e| e.to_string())?.macro_f1;
    ensure((got - want).abs() <= 1e-12, || {
        format!("3-class macro F1 {got} vs {want}")
    })?;
    let identity = eval_f1(&g, &g).map_err(|e| e.to_string())?.macro_f1;
    ensure(identity == 1.0, || format!("identity macro F1 {identity}"))?;
    Ok(format!(
        "kappa {kappa:.4}; macro F1 {:.4} / {got:.4} / identity {identity}",
        f1.macro_f1
    ))
}

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn run_pipeline(ws: &Path) -> Result<(), String> {
    let input = data("synthetic_forum.jsonl");
    let topic = data("topics/gmo.json");
    let stages: [&[&str]; 8] = [
        &[
            "ingest",
            "--input",
            input.to_str().unwrap(),
            "--salt",
            "acceptance",
        ],
        &[
            "filter",
            "--topic",
            topic.to_str().unwrap(),
            "--min-posts",
            "5",
            "--min-posts",
            "10",
        ],
        &["classify", "--backend", "lexicon"],
        &["cluster"],
        &["metrics"],
        &["dis"],
        &["report"],
        &["export", "--format", "gexf"],
    ];
    for args in stages {
        let out = Command::new(env!("CARGO_BIN_EXE_agora"))
            .arg("--workspace")
            .arg(ws)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
        })?;
    }
    Ok(())
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn check_ccdf(csv: &str, name: &str) -> Result<(), String> {
    let mut last: HashMap<String, f64> = HashMap::new();
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    let grouped = header.starts_with("group,");
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let (group, value) = if grouped {
            (cols[0], cols[2])
        } else {
            ("", cols[1])
        };
        let v: f64 = value
            .parse()
            .map_err(|_| format!("{name}: bad value {value}"))?;
        if let Some(prev) = last.insert(group.to_string(), v) {
            ensure(v <= prev, || {
                format!("{name}: {group} rises from {prev} to {v}")
            })?;
        }
    }
    ensure(!last.is_empty(), || format!("{name} is empty"))
}

fn criterion_8() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    ensure(sa.keys().eq(sb.keys()), || {
        "runs wrote different file sets".into()
    })?;
    for (path, bytes) in &sa {
        ensure(&sb[path] == bytes, || {
            format!("{} differs between runs", path.display())
        })?;
    }
    for name in ["reports/length_ccdf.csv", "reports/dis_ccdf.csv"] {
        let csv = String::from_utf8(sa[Path::new(name)].clone()).map_err(|e| e.to_string())?;
        check_ccdf(&csv, name)?;
    }
    let gexf: Vec<&PathBuf> = sa
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "gexf"))
        .collect();
    ensure(!gexf.is_empty(), || "no GEXF exported".into())?;
    for path in &gexf {
        let xml = std::str::from_utf8(&sa[*path]).map_err(|e| e.to_string())?;
        validate_gexf(xml).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(format!(
        "{} files byte-identical across runs; CCDFs non-increasing; {} GEXF files valid",
        sa.len(),
        gexf.len()
    ))
}

fn criterion_9() -> Outcome {
    let ws = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(ws.path())?;
    let md =
        std::fs::read_to_string(ws.path().join("reports/summary.md")).map_err(|e| e.to_string())?;
    for needle in [
        "| No Argument |",
        "| Arguments Against |",
        "| Avg. degree |",
        "DIS over",
    ] {
        ensure(md.contains(needle), || {
            format!("summary.md lacks {needle:?}")
        })?;
    }
    let json = std::fs::read_to_string(ws.path().join("reports/summary.json"))
        .map_err(|e| e.to_string())?;
    serde_json::from_str::<serde_json::Value>(&json).map_err(|e| e.to_string())?;
    Ok(
        "reference report regenerated (summary.md, summary.json); corpus-scale values not asserted"
            .into(),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("DIS formula fidelity", criterion_1, Duration::from_secs(1)),
        (
            "DIS bounds and weights",
            criterion_2,
            Duration::from_secs(1),
        ),
        (
            "clustering equivalence",
            criterion_3,
            Duration::from_secs(5),
        ),
        (
            "18-post reference thread",
            criterion_4,
            Duration::from_secs(1),
        ),
        ("PostRank", criterion_5, Duration::from_secs(10)),
        ("stance dependence", criterion_6, Duration::from_secs(1)),
        ("evaluation utilities", criterion_7, Duration::from_secs(1)),
        ("pipeline determinism", criterion_8, Duration::from_secs(10)),
        (
            "reference report format",
            criterion_9,
            Duration::from_secs(10),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= *budget {
                Ok(detail)
            } else {
                Err(format!("took {elapsed:?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(detail) => println!(
                "criterion {} PASS  {name}: {detail} ({:.0?})",
                i + 1,
                elapsed
            ),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {why} ({:.0?})", i + 1, elapsed);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

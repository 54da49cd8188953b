//! Distribution tables over labeled posts and deliberation profiles.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::backends::{ArgumentLabel, Stance};
use crate::corpus::Post;
use crate::deliberation::DeliberationProfile;
use crate::error::{Error, Result};
use crate::text::word_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    LengthCcdf,
    UpvoteDist,
    StanceHistogram,
    ArgsVsSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub group: String,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub kind: TableKind,
    pub rows: Vec<DistributionRow>,
}

impl DistributionTable {
    pub fn group(&self, name: &str) -> impl Iterator<Item = &DistributionRow> + '_ {
        let name = name.to_string();
        self.rows.iter().filter(move |r| r.group == name)
    }

    pub fn value_at(&self, group: &str, x: f64) -> Option<f64> {
        self.group(group).find(|r| r.x == x).map(|r| r.value)
    }

    pub fn to_csv(&self) -> Result<String> {
        let rows = self
            .rows
            .iter()
            .map(|r| vec![r.group.clone(), fmt_num(r.x), fmt_num(r.value)]);
        csv_string(&["group", "x", "value"], rows)
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Comma-separated, LF-terminated, header first.
pub fn csv_string<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn grouped_posts<'a>(
    posts: &'a [Post],
    labels: &HashMap<String, ArgumentLabel>,
) -> BTreeMap<usize, (Stance, Vec<&'a Post>)> {
    let mut groups: BTreeMap<usize, (Stance, Vec<&Post>)> = Stance::ALL
        .iter()
        .map(|&s| (s.index(), (s, Vec::new())))
        .collect();
    for p in posts {
        if let Some(l) = labels.get(&p.post_id) {
            groups
                .get_mut(&l.stance.index())
                .expect("all stances")
                .1
                .push(p);
        }
    }
    groups
}

/// `P(length > x)` per stance at every integer `x` from 0 to the group's
/// longest post. Length counts whitespace-separated tokens of the body.
/// Posts without a label are left out.
pub fn length_ccdf(posts: &[Post], labels: &HashMap<String, ArgumentLabel>) -> DistributionTable {
    let mut rows = Vec::new();
    for (_, (stance, members)) in grouped_posts(posts, labels) {
        if members.is_empty() {
            continue;
        }
        let mut lengths: Vec<usize> = members.iter().map(|p| word_count(&p.body)).collect();
        lengths.sort_unstable();
        let n = lengths.len() as f64;
        let max = *lengths.last().expect("non-empty");
        for x in 0..=max {
            let at_most = lengths.partition_point(|&l| l <= x);
            rows.push(DistributionRow {
                group: stance.as_str().into(),
                x: x as f64,
                value: (lengths.len() - at_most) as f64 / n,
            });
        }
    }
    DistributionTable {
        kind: TableKind::LengthCcdf,
        rows,
    }
}

/// Empirical distribution of `score - 1` per stance. Negative values stay.
pub fn upvote_distribution(
    posts: &[Post],
    labels: &HashMap<String, ArgumentLabel>,
) -> DistributionTable {
    let mut rows = Vec::new();
    for (_, (stance, members)) in grouped_posts(posts, labels) {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for p in &members {
            *counts.entry(p.score - 1).or_default() += 1;
        }
        let n = members.len() as f64;
        rows.extend(counts.into_iter().map(|(x, c)| DistributionRow {
            group: stance.as_str().into(),
            x: x as f64,
            value: c as f64 / n,
        }));
    }
    DistributionTable {
        kind: TableKind::UpvoteDist,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    /// `all` or an aspect name; `unassigned` for labels without an aspect.
    pub group: String,
    pub category: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceHistogram {
    pub rows: Vec<HistogramRow>,
}

pub const UNASSIGNED: &str = "unassigned";

impl StanceHistogram {
    pub fn get(&self, group: &str, category: &str) -> Option<&HistogramRow> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.category == category)
    }

    pub fn to_csv(&self) -> Result<String> {
        let rows = self.rows.iter().map(|r| {
            vec![
                r.group.clone(),
                r.category.clone(),
                r.count.to_string(),
                format!("{:.2}", r.percent),
            ]
        });
        csv_string(&["group", "category", "count", "percent"], rows)
    }
}

/// Stance counts overall and per aspect. The overall block reads
/// `all`, `no_argument`, `with_arguments`, `for`, `against`; each aspect
/// block reads `none`, `for`, `against`. Percentages are of the block's
/// total.
pub fn stance_histogram<'a>(
    labels: impl IntoIterator<Item = &'a ArgumentLabel>,
) -> StanceHistogram {
    let mut overall = [0usize; 3];
    let mut by_aspect: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for l in labels {
        overall[l.stance.index()] += 1;
        by_aspect
            .entry(l.aspect.as_deref().unwrap_or(UNASSIGNED))
            .or_default()[l.stance.index()] += 1;
    }
    let total: usize = overall.iter().sum();
    let mut rows = Vec::new();
    if total == 0 {
        return StanceHistogram { rows };
    }
    let pct = |c: usize, t: usize| 100.0 * c as f64 / t as f64;
    let [none, n_for, n_against] = overall;
    for (cat, c) in [
        ("all", total),
        ("no_argument", none),
        ("with_arguments", n_for + n_against),
        ("for", n_for),
        ("against", n_against),
    ] {
        rows.push(HistogramRow {
            group: "all".into(),
            category: cat.into(),
            count: c,
            percent: pct(c, total),
        });
    }
    for (aspect, counts) in by_aspect {
        let t: usize = counts.iter().sum();
        for s in Stance::ALL {
            rows.push(HistogramRow {
                group: aspect.into(),
                category: s.as_str().into(),
                count: counts[s.index()],
                percent: pct(counts[s.index()], t),
            });
        }
    }
    StanceHistogram { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation; 0 when `y` is constant.
    pub r: f64,
}

/// Ordinary least squares. `None` when fewer than two points or `x` has no
/// variance.
pub fn least_squares(points: &[(f64, f64)]) -> Option<LinearFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r: r.clamp(-1.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgsVsSize {
    /// Groups `arguments` and `dis`, both over `x = n_posts`.
    pub table: DistributionTable,
    pub arguments_fit: Option<LinearFit>,
    pub dis_fit: Option<LinearFit>,
}

pub fn args_vs_size(profiles: &[DeliberationProfile]) -> Result<ArgsVsSize> {
    if profiles.len() < 2 {
        return Err(Error::Domain(format!(
            "a size scatter needs at least 2 threads, got {}",
            profiles.len()
        )));
    }
    let mut sorted: Vec<&DeliberationProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| (a.n_posts, &a.thread_id).cmp(&(b.n_posts, &b.thread_id)));
    let args: Vec<(f64, f64)> = sorted
        .iter()
        .map(|p| (p.n_posts as f64, p.n_arguments as f64))
        .collect();
    let dis: Vec<(f64, f64)> = sorted.iter().map(|p| (p.n_posts as f64, p.dis)).collect();
    let mut rows = Vec::new();
    for (group, pts) in [("arguments", &args), ("dis", &dis)] {
        rows.extend(pts.iter().map(|&(x, value)| DistributionRow {
            group: group.into(),
            x,
            value,
        }));
    }
    Ok(ArgsVsSize {
        arguments_fit: least_squares(&args),
        dis_fit: least_squares(&dis),
        table: DistributionTable {
            kind: TableKind::ArgsVsSize,
            rows,
        },
    })
}

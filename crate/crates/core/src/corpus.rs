//! Forum dump ingestion and the normalized post store.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::workspace::{
    read_json, read_jsonl, require, write_json, write_jsonl, FieldMapping, OrphanPolicy, Workspace,
};

/// One forum post in its normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub thread_id: String,
    pub parent_id: Option<String>,
    pub author_hash: String,
    pub created_at: i64,
    pub title: Option<String>,
    pub body: String,
    pub score: i64,
    pub is_root: bool,
    pub orphan: bool,
}

impl Post {
    /// Title and body joined, as seen by the matchers and classifiers.
    pub fn text(&self) -> String {
        match &self.title {
            Some(t) if !t.is_empty() => format!("{t}\n\n{}", self.body),
            _ => self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub thread_id: String,
    /// Root first, then by `(created_at, post_id)`.
    pub post_ids: Vec<String>,
    pub subreddit: String,
}

/// Entry in `corpus/threads.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadEntry {
    pub subreddit: String,
    pub root_id: String,
    pub n_posts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records_in: usize,
    /// Posts newly added to the store, attached orphans included.
    pub posts_in: usize,
    pub malformed: usize,
    pub missing_fields: usize,
    pub duplicates: usize,
    /// Additional parentless records in a thread that already has a root.
    pub extra_roots: usize,
    /// Orphans re-parented under the thread root.
    pub orphans: usize,
    /// Orphans discarded by the drop policy, plus posts of threads whose root
    /// is absent from the dump.
    pub dropped_orphans: usize,
    pub threads: usize,
    pub posts_total: usize,
}

impl IngestStats {
    pub fn skipped(&self) -> usize {
        self.malformed + self.missing_fields + self.duplicates + self.extra_roots
    }
}

pub fn hash_author(salt: &str, author: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(b":");
    h.update(author.as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn strip_kind_prefix(id: &str) -> &str {
    // t1_ = comment, t3_ = submission
    match id.get(..3) {
        Some("t1_") | Some("t3_") => &id[3..],
        _ => id,
    }
}

fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(strip_kind_prefix(s).to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn as_int(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        Value::String(s) => s
            .parse::<i64>()
            .ok()
            .or_else(|| s.parse::<f64>().ok().map(|f| f as i64)),
        _ => None,
    }
}

fn as_text(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

struct RawPost {
    post: Post,
    subreddit: String,
}

enum Parsed {
    Ok(RawPost),
    Malformed,
    Missing,
}

fn parse_record(line: &str, map: &FieldMapping, salt: &str) -> Parsed {
    let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(line) else {
        return Parsed::Malformed;
    };
    let Some(post_id) = obj.get(&map.id).and_then(as_id) else {
        return Parsed::Missing;
    };
    let parent_id = obj.get(&map.parent_id).and_then(as_id);
    let thread_id = match obj.get(&map.link_id).and_then(as_id) {
        Some(t) => t,
        // Submissions in pushshift dumps carry no link_id.
        None if parent_id.is_none() => post_id.clone(),
        None => return Parsed::Missing,
    };
    let body = as_text(obj.get(&map.body)).or_else(|| as_text(obj.get("selftext")));
    let title = as_text(obj.get(&map.title));
    if body.is_none() && title.is_none() {
        return Parsed::Missing;
    }
    let is_root = parent_id.is_none();
    let author = as_text(obj.get(&map.author)).unwrap_or_default();
    let post = Post {
        post_id,
        thread_id,
        parent_id,
        author_hash: hash_author(salt, &author),
        created_at: obj.get(&map.created_utc).and_then(as_int).unwrap_or(0),
        title: if is_root { title } else { None },
        body: body.unwrap_or_default(),
        score: obj.get(&map.score).and_then(as_int).unwrap_or(1),
        is_root,
        orphan: false,
    };
    Parsed::Ok(RawPost {
        post,
        subreddit: as_text(obj.get(&map.subreddit)).unwrap_or_default(),
    })
}

fn post_order(a: &Post, b: &Post) -> std::cmp::Ordering {
    (&a.thread_id, a.created_at, &a.post_id).cmp(&(&b.thread_id, b.created_at, &b.post_id))
}

/// Ingests a newline-delimited JSON dump into the workspace store, merging
/// with any posts already stored. The salt and field mapping are taken from
/// the workspace config, which must already exist.
pub fn ingest<R: BufRead>(ws: &Workspace, dump: R, policy: OrphanPolicy) -> Result<IngestStats> {
    let config = ws
        .load_config()?
        .ok_or_else(|| Error::Invalid("workspace has no config.json".into()))?;
    let mut stats = IngestStats::default();

    let existing = if ws.posts_path().exists() {
        Corpus::load(ws)?
    } else {
        Corpus::default()
    };
    let mut seen: HashSet<String> = existing.posts.iter().map(|p| p.post_id.clone()).collect();
    let mut subreddits: BTreeMap<String, String> = existing
        .threads
        .iter()
        .map(|(id, t)| (id.clone(), t.subreddit.clone()))
        .collect();
    let mut by_thread: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    let mut new_ids = HashSet::new();
    for p in existing.posts {
        by_thread.entry(p.thread_id.clone()).or_default().push(p);
    }

    for line in dump.lines() {
        let line = line.map_err(|e| Error::io("<dump>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.records_in += 1;
        match parse_record(&line, &config.field_mapping, &config.salt) {
            Parsed::Malformed => stats.malformed += 1,
            Parsed::Missing => stats.missing_fields += 1,
            Parsed::Ok(raw) => {
                if !seen.insert(raw.post.post_id.clone()) {
                    stats.duplicates += 1;
                    continue;
                }
                let sub = subreddits.entry(raw.post.thread_id.clone()).or_default();
                if (sub.is_empty() || raw.post.is_root) && !raw.subreddit.is_empty() {
                    *sub = raw.subreddit;
                }
                new_ids.insert(raw.post.post_id.clone());
                by_thread
                    .entry(raw.post.thread_id.clone())
                    .or_default()
                    .push(raw.post);
            }
        }
    }

    let mut posts = Vec::new();
    let mut threads = BTreeMap::new();
    for (thread_id, mut members) in by_thread {
        members.sort_by(post_order);
        let stored_root = members
            .iter()
            .position(|p| p.is_root && !new_ids.contains(&p.post_id));
        let Some(root_idx) = stored_root.or_else(|| members.iter().position(|p| p.is_root)) else {
            stats.dropped_orphans += members
                .iter()
                .filter(|p| new_ids.contains(&p.post_id))
                .count();
            continue;
        };
        let root_id = members[root_idx].post_id.clone();
        let before = members.len();
        members.retain(|p| !p.is_root || p.post_id == root_id);
        stats.extra_roots += before - members.len();

        let resolved = resolve_tree(&root_id, members, policy);
        stats.orphans += resolved.attached;
        stats.dropped_orphans += resolved.dropped;
        threads.insert(
            thread_id.clone(),
            ThreadEntry {
                subreddit: subreddits.get(&thread_id).cloned().unwrap_or_default(),
                root_id,
                n_posts: resolved.posts.len(),
            },
        );
        posts.extend(resolved.posts);
    }
    posts.sort_by(post_order);

    stats.posts_in = posts
        .iter()
        .filter(|p| new_ids.contains(&p.post_id))
        .count();
    stats.threads = threads.len();
    stats.posts_total = posts.len();
    // these removals were counted as skips or drops, not as kept posts
    debug_assert_eq!(
        stats.posts_in + stats.skipped() + stats.dropped_orphans,
        stats.records_in
    );

    write_jsonl(&ws.posts_path(), &posts)?;
    write_json(&ws.threads_path(), &threads)?;
    Ok(stats)
}

struct Resolved {
    posts: Vec<Post>,
    attached: usize,
    dropped: usize,
}

/// Makes every post reachable from the root, either by re-parenting orphans
/// under the root or by dropping them.
fn resolve_tree(root_id: &str, mut members: Vec<Post>, policy: OrphanPolicy) -> Resolved {
    let mut attached = 0;
    loop {
        let ids: HashSet<&str> = members.iter().map(|p| p.post_id.as_str()).collect();
        let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
        for p in &members {
            if let Some(parent) = &p.parent_id {
                if ids.contains(parent.as_str()) && parent != &p.post_id {
                    children
                        .entry(parent.as_str())
                        .or_default()
                        .push(&p.post_id);
                }
            }
        }
        let mut reachable: HashSet<String> = HashSet::new();
        let mut stack = vec![root_id];
        while let Some(id) = stack.pop() {
            if reachable.insert(id.to_string()) {
                if let Some(cs) = children.get(id) {
                    stack.extend(cs.iter().copied());
                }
            }
        }
        if reachable.len() == members.len() {
            return Resolved {
                posts: members,
                attached,
                dropped: 0,
            };
        }
        if policy == OrphanPolicy::Drop {
            let before = members.len();
            members.retain(|p| reachable.contains(&p.post_id));
            return Resolved {
                dropped: before - members.len(),
                posts: members,
                attached,
            };
        }
        // Re-parent posts whose parent is absent. If none exist, the
        // unreachable part is a cycle; break it at its earliest post.
        let unresolved: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|(_, p)| !reachable.contains(&p.post_id))
            .filter(|(_, p)| {
                p.parent_id
                    .as_deref()
                    .is_none_or(|par| !ids.contains(par) || par == p.post_id)
            })
            .map(|(i, _)| i)
            .collect();
        let targets = if unresolved.is_empty() {
            members
                .iter()
                .position(|p| !reachable.contains(&p.post_id))
                .into_iter()
                .collect()
        } else {
            unresolved
        };
        for i in targets {
            members[i].parent_id = Some(root_id.to_string());
            members[i].orphan = true;
            attached += 1;
        }
    }
}

/// Read-only view of the post store.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub posts: Vec<Post>,
    pub threads: BTreeMap<String, ThreadEntry>,
    by_thread: HashMap<String, Vec<usize>>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn load(ws: &Workspace) -> Result<Self> {
        let posts: Vec<Post> = read_jsonl(&require(ws.posts_path(), "ingest")?)?;
        let threads = read_json(&require(ws.threads_path(), "ingest")?)?;
        Ok(Self::from_parts(posts, threads))
    }

    pub fn from_parts(posts: Vec<Post>, threads: BTreeMap<String, ThreadEntry>) -> Self {
        let mut by_thread: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_id = HashMap::new();
        for (i, p) in posts.iter().enumerate() {
            by_thread.entry(p.thread_id.clone()).or_default().push(i);
            by_id.insert(p.post_id.clone(), i);
        }
        Self {
            posts,
            threads,
            by_thread,
            by_id,
        }
    }

    pub fn thread_ids(&self) -> impl Iterator<Item = &str> {
        self.threads.keys().map(String::as_str)
    }

    pub fn post(&self, post_id: &str) -> Option<&Post> {
        self.by_id.get(post_id).map(|&i| &self.posts[i])
    }

    /// Post ids of a thread in store order.
    pub fn thread_post_ids(&self, thread_id: &str) -> Option<Vec<String>> {
        self.by_thread
            .get(thread_id)
            .map(|ix| ix.iter().map(|&i| self.posts[i].post_id.clone()).collect())
    }

    pub fn thread_size(&self, thread_id: &str) -> usize {
        self.threads.get(thread_id).map_or(0, |t| t.n_posts)
    }

    /// Posts of a thread, root first, then by `(created_at, post_id)`.
    pub fn load_thread(&self, thread_id: &str) -> Result<(Thread, Vec<Post>)> {
        let entry = self.threads.get(thread_id).ok_or_else(|| Error::NotFound {
            kind: "thread",
            id: thread_id.to_string(),
        })?;
        let mut posts: Vec<Post> = self
            .by_thread
            .get(thread_id)
            .map(|idx| idx.iter().map(|&i| self.posts[i].clone()).collect())
            .unwrap_or_default();
        posts.sort_by(|a, b| {
            (!a.is_root, a.created_at, &a.post_id).cmp(&(!b.is_root, b.created_at, &b.post_id))
        });
        let thread = Thread {
            thread_id: thread_id.to_string(),
            post_ids: posts.iter().map(|p| p.post_id.clone()).collect(),
            subreddit: entry.subreddit.clone(),
        };
        Ok((thread, posts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::WorkspaceConfig;

    fn fresh_ws() -> (tempfile::TempDir, Workspace) {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("ws"));
        ws.save_config(&WorkspaceConfig {
            salt: "pepper".into(),
            ..Default::default()
        })
        .unwrap();
        (dir, ws)
    }

    const FIXTURE: &str = r#"{"id":"t1","subreddit":"farming","author":"alice","created_utc":100,"title":"Seeds?","body":"Which seeds","score":3}
{"id":"c1","link_id":"t3_t1","parent_id":"t3_t1","author":"bob","created_utc":110,"body":"Heirloom","score":1}
{"id":"c2","link_id":"t3_t1","parent_id":"t1_c1","author":"carol","created_utc":120,"body":"Agreed","score":2}
"#;

    #[test]
    fn three_record_dump() {
        let (_d, ws) = fresh_ws();
        let stats = ingest(&ws, FIXTURE.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        assert_eq!((stats.posts_in, stats.threads, stats.orphans), (3, 1, 0));
        let corpus = Corpus::load(&ws).unwrap();
        let (thread, posts) = corpus.load_thread("t1").unwrap();
        assert_eq!(thread.post_ids, ["t1", "c1", "c2"]);
        assert!(posts[0].is_root);
        assert_eq!(posts[2].parent_id.as_deref(), Some("c1"));
        assert_eq!(thread.subreddit, "farming");
        assert_ne!(posts[0].author_hash, "alice");
    }

    #[test]
    fn orphan_attached_to_root() {
        let (_d, ws) = fresh_ws();
        let dump = format!(
            "{FIXTURE}{}\n",
            r#"{"id":"c9","link_id":"t3_t1","parent_id":"t1_gone","created_utc":130,"body":"lost"}"#
        );
        let stats = ingest(&ws, dump.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        assert_eq!(stats.orphans, 1);
        let corpus = Corpus::load(&ws).unwrap();
        let p = corpus.post("c9").unwrap();
        assert_eq!(p.parent_id.as_deref(), Some("t1"));
        assert!(p.orphan && !p.is_root);
    }

    #[test]
    fn orphan_dropped_and_counted() {
        let (_d, ws) = fresh_ws();
        let dump = format!(
            "{FIXTURE}{}\n{}\n",
            r#"{"id":"c9","link_id":"t3_t1","parent_id":"t1_gone","created_utc":130,"body":"lost"}"#,
            r#"{"id":"c10","link_id":"t3_t1","parent_id":"t1_c9","created_utc":131,"body":"also lost"}"#
        );
        let stats = ingest(&ws, dump.as_bytes(), OrphanPolicy::Drop).unwrap();
        assert_eq!((stats.posts_in, stats.dropped_orphans), (3, 2));
        assert_eq!(Corpus::load(&ws).unwrap().posts.len(), 3);
    }

    #[test]
    fn reingest_is_idempotent() {
        let (_d, ws) = fresh_ws();
        ingest(&ws, FIXTURE.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        let before = std::fs::read(ws.posts_path()).unwrap();
        let stats = ingest(&ws, FIXTURE.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        assert_eq!(stats.posts_in, 0);
        assert_eq!(stats.duplicates, 3);
        assert_eq!(std::fs::read(ws.posts_path()).unwrap(), before);
    }

    #[test]
    fn malformed_lines_are_counted_not_fatal() {
        let (_d, ws) = fresh_ws();
        let dump = format!("{{not json\n{FIXTURE}[1,2]\n{{\"body\":\"no id\"}}\n");
        let stats = ingest(&ws, dump.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        assert_eq!(stats.malformed, 2);
        assert_eq!(stats.missing_fields, 1);
        assert_eq!(stats.posts_in, 3);
        assert_eq!(
            stats.posts_in + stats.skipped() + stats.dropped_orphans,
            stats.records_in
        );
    }

    #[test]
    fn timestamp_ties_broken_by_id() {
        let (_d, ws) = fresh_ws();
        let dump = r#"{"id":"r","created_utc":5,"title":"t","body":""}
{"id":"zz","link_id":"r","parent_id":"r","created_utc":9,"body":"b"}
{"id":"aa","link_id":"r","parent_id":"r","created_utc":9,"body":"a"}"#;
        ingest(&ws, dump.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        let (thread, _) = Corpus::load(&ws).unwrap().load_thread("r").unwrap();
        assert_eq!(thread.post_ids, ["r", "aa", "zz"]);
    }

    #[test]
    fn unknown_thread_is_not_found() {
        let (_d, ws) = fresh_ws();
        ingest(&ws, FIXTURE.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        let err = Corpus::load(&ws)
            .unwrap()
            .load_thread("missing")
            .unwrap_err();
        assert!(matches!(err, Error::NotFound { .. }));
    }

    #[test]
    fn reply_cycle_is_broken_at_root() {
        let (_d, ws) = fresh_ws();
        let dump = r#"{"id":"r","created_utc":1,"title":"t","body":""}
{"id":"a","link_id":"r","parent_id":"b","created_utc":2,"body":"x"}
{"id":"b","link_id":"r","parent_id":"a","created_utc":3,"body":"y"}"#;
        let stats = ingest(&ws, dump.as_bytes(), OrphanPolicy::AttachRoot).unwrap();
        assert_eq!(stats.orphans, 1);
        let c = Corpus::load(&ws).unwrap();
        assert_eq!(c.post("a").unwrap().parent_id.as_deref(), Some("r"));
        assert_eq!(c.post("b").unwrap().parent_id.as_deref(), Some("a"));
    }
}

//! On-disk workspace layout and configuration.
//!
//! Every stage reads its inputs from and writes its outputs to a single
//! workspace directory:
//!
//! ```text
//! ws/config.json              salt, field mapping, policies, stage settings
//! ws/corpus/posts.jsonl       normalized posts, sorted by (thread, time, id)
//! ws/corpus/threads.json      thread index
//! ws/topics/<topic>.json      topic definitions
//! ws/subsets/<label>.json     thread subsets
//! ws/lexicons/*.txt           reference classifier lexicons
//! ws/labels/<label>.jsonl     argument labels for a subset
//! ws/clusters/<label>.json    per-thread argument clusters
//! ws/metrics/                 per-thread metrics, stance dependence, DIS
//! ws/reports/                 distribution tables and corpus summary
//! ws/exports/                 per-thread graph exports
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do with replies whose parent is not present in the dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OrphanPolicy {
    /// Re-parent under the thread root and flag as orphan.
    #[default]
    AttachRoot,
    Drop,
}

/// Source field names for each normalized post field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    pub id: String,
    pub link_id: String,
    pub parent_id: String,
    pub subreddit: String,
    pub author: String,
    pub created_utc: String,
    pub body: String,
    pub title: String,
    pub score: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            id: "id".into(),
            link_id: "link_id".into(),
            parent_id: "parent_id".into(),
            subreddit: "subreddit".into(),
            author: "author".into(),
            created_utc: "created_utc".into(),
            body: "body".into(),
            title: "title".into(),
            score: "score".into(),
        }
    }
}

impl FieldMapping {
    /// Applies a `field=source` override.
    pub fn set(&mut self, field: &str, source: &str) -> Result<()> {
        let slot = match field {
            "id" => &mut self.id,
            "link_id" => &mut self.link_id,
            "parent_id" => &mut self.parent_id,
            "subreddit" => &mut self.subreddit,
            "author" => &mut self.author,
            "created_utc" => &mut self.created_utc,
            "body" => &mut self.body,
            "title" => &mut self.title,
            "score" => &mut self.score,
            other => return Err(Error::Invalid(format!("unknown post field `{other}`"))),
        };
        *slot = source.to_string();
        Ok(())
    }
}

/// Contents of `ws/config.json`. Stage settings are optional defaults that
/// command-line flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct WorkspaceConfig {
    pub salt: String,
    pub field_mapping: FieldMapping,
    pub orphan_policy: OrphanPolicy,
    pub settings: BTreeMap<String, serde_json::Value>,
}

impl WorkspaceConfig {
    pub fn setting<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        self.settings
            .get(key)
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn config_path(&self) -> PathBuf {
        self.path("config.json")
    }
    pub fn posts_path(&self) -> PathBuf {
        self.path("corpus/posts.jsonl")
    }
    pub fn threads_path(&self) -> PathBuf {
        self.path("corpus/threads.json")
    }
    pub fn topic_path(&self, topic: &str) -> PathBuf {
        self.path(format!("topics/{}.json", file_stem(topic)))
    }
    pub fn subset_path(&self, label: &str) -> PathBuf {
        self.path(format!("subsets/{}.json", file_stem(label)))
    }
    pub fn lexicon_path(&self, name: &str) -> PathBuf {
        self.path(format!("lexicons/{name}.txt"))
    }
    pub fn labels_path(&self, label: &str) -> PathBuf {
        self.path(format!("labels/{}.jsonl", file_stem(label)))
    }
    pub fn clusters_path(&self, label: &str) -> PathBuf {
        self.path(format!("clusters/{}.json", file_stem(label)))
    }
    pub fn metrics_path(&self, name: &str) -> PathBuf {
        self.path(format!("metrics/{name}"))
    }
    pub fn report_path(&self, name: &str) -> PathBuf {
        self.path(format!("reports/{name}"))
    }
    pub fn export_path(&self, thread_id: &str, ext: &str) -> PathBuf {
        self.path(format!("exports/{}.{ext}", file_stem(thread_id)))
    }

    pub fn load_config(&self) -> Result<Option<WorkspaceConfig>> {
        let path = self.config_path();
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    /// Loads the config, falling back to defaults for a fresh workspace.
    pub fn config_or_default(&self) -> Result<WorkspaceConfig> {
        Ok(self.load_config()?.unwrap_or_default())
    }

    pub fn save_config(&self, config: &WorkspaceConfig) -> Result<()> {
        write_json(&self.config_path(), config)
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

pub fn write_jsonl<'a, T, I>(path: &Path, rows: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

/// Returns a prerequisite error if `path` does not exist.
pub fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingPrerequisite { stage, path })
    }
}

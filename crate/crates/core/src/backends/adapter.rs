//! Client for external model adapters.
//!
//! An adapter is a child process that speaks newline-delimited JSON over its
//! standard streams. On start it prints one handshake line:
//!
//! ```text
//! {"protocol":"argusense-adapter","version":1,"capabilities":["classify","similarity","embed","ner"],"embed_dim":384}
//! ```
//!
//! after which every request line `{"id":N,"op":...}` is answered by exactly
//! one response line carrying the same id, in any order. A failed request is
//! answered with `{"id":N,"error":"message"}`.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    aspect_matchers, choose_aspect, ArgumentLabel, BackendHandle, BackendKind, Capability,
    Embedder, EntityMention, EntityRecognizer, EntityType, SimilarityBackend, SimilarityMatrix,
    Stance, StanceClassifier,
};
use crate::corpus::Post;
use crate::error::{BackendError, Error, Result};
use crate::relevance::Aspect;
use crate::text::lower_words;

pub const PROTOCOL_NAME: &str = "argusense-adapter";
pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// First line printed by an adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub version: u64,
    pub capabilities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Op {
    Classify { aspect: String, texts: Vec<String> },
    Similarity { pairs: Vec<(String, String)> },
    Embed { texts: Vec<String> },
    Ner { texts: Vec<String> },
}

impl Op {
    pub fn capability(&self) -> Capability {
        match self {
            Op::Classify { .. } => Capability::Classify,
            Op::Similarity { .. } => Capability::Similarity,
            Op::Embed { .. } => Capability::Embed,
            Op::Ner { .. } => Capability::Ner,
        }
    }
}

type Reply = std::result::Result<Value, BackendError>;
type PendingMap = Arc<Mutex<HashMap<u64, Sender<Reply>>>>;

/// A request that has been written to the adapter but not yet answered.
pub struct Pending {
    id: u64,
    rx: Receiver<Reply>,
    timeout: Duration,
    pending: PendingMap,
}

impl Pending {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn wait(self) -> std::result::Result<Value, BackendError> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(Ok(v)) => match v.get("error") {
                Some(e) => Err(BackendError::Remote {
                    id: self.id,
                    message: e.as_str().map_or_else(|| e.to_string(), str::to_string),
                }),
                None => Ok(v),
            },
            Ok(Err(e)) => Err(e),
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().remove(&self.id);
                Err(BackendError::Timeout {
                    id: self.id,
                    seconds: self.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(BackendError::Transport("adapter reader stopped".into()))
            }
        }
    }
}

/// Post indices of one classify request and the stances returned for them.
type GroupReply = (Vec<usize>, Vec<(Stance, [f64; 3])>);

/// Connection to one adapter process. Writes are serialized; any number of
/// requests may be in flight and replies are matched by id.
pub struct AdapterClient {
    handle: BackendHandle,
    embed_dim: Option<usize>,
    writer: Mutex<Box<dyn Write + Send>>,
    pending: PendingMap,
    next_id: AtomicU64,
    timeout: Duration,
    batch_size: usize,
    child: Option<Child>,
    reader: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for AdapterClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterClient")
            .field("handle", &self.handle)
            .field("embed_dim", &self.embed_dim)
            .finish_non_exhaustive()
    }
}

impl AdapterClient {
    /// Launches `command` through `sh -c` and completes the handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(format!("exec {command}"))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Transport(format!("cannot launch `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let program = command
            .split_whitespace()
            .next()
            .and_then(|p| p.rsplit('/').next())
            .unwrap_or("adapter");
        let mut client = Self::connect(BufReader::new(stdout), stdin, program, timeout);
        if let Ok(c) = &mut client {
            c.child = Some(child);
        } else {
            let _ = child.kill();
            let _ = child.wait();
        }
        client
    }

    /// Completes the handshake over an arbitrary stream pair.
    pub fn connect<R, W>(reader: R, writer: W, name: &str, timeout: Duration) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let pending: PendingMap = Arc::default();
        let (hs_tx, hs_rx) = mpsc::channel();
        let reader = {
            let pending = Arc::clone(&pending);
            std::thread::spawn(move || read_loop(reader, hs_tx, pending))
        };
        let line = match hs_rx.recv_timeout(timeout) {
            Ok(Some(line)) => line,
            Ok(None) | Err(RecvTimeoutError::Disconnected) => {
                return Err(
                    BackendError::Handshake("adapter exited before handshake".into()).into(),
                )
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(BackendError::Handshake("no handshake line".into()).into())
            }
        };
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| BackendError::Handshake(format!("{e}: {line}")))?;
        if hs.protocol != PROTOCOL_NAME {
            return Err(
                BackendError::Handshake(format!("unknown protocol `{}`", hs.protocol)).into(),
            );
        }
        if hs.version != PROTOCOL_VERSION {
            return Err(BackendError::VersionMismatch {
                expected: PROTOCOL_VERSION,
                found: hs.version,
            }
            .into());
        }
        let capabilities: BTreeSet<Capability> = hs
            .capabilities
            .iter()
            .filter_map(|c| Capability::parse(c))
            .collect();
        Ok(Self {
            handle: BackendHandle {
                kind: BackendKind::Adapter,
                backend_id: format!("adapter:{name}"),
                capabilities,
            },
            embed_dim: hs.embed_dim,
            writer: Mutex::new(Box::new(writer)),
            pending,
            next_id: AtomicU64::new(1),
            timeout,
            batch_size: 64,
            child: None,
            reader: Some(reader),
        })
    }

    pub fn embed_dim(&self) -> Option<usize> {
        self.embed_dim
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    /// Writes a request and returns a ticket for its reply.
    pub fn submit(&self, op: Op) -> Result<Pending> {
        self.handle.require(op.capability())?;
        self.send(|id| serde_json::to_string(&Request { id, op }).expect("request serializes"))
    }

    /// Writes an arbitrary request object with a fresh id and no capability
    /// check. Intended for probing adapters with requests outside [`Op`].
    pub fn submit_raw(&self, mut fields: serde_json::Map<String, Value>) -> Result<Pending> {
        self.send(move |id| {
            fields.insert("id".into(), id.into());
            Value::Object(fields).to_string()
        })
    }

    fn send(&self, encode: impl FnOnce(u64) -> String) -> Result<Pending> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = mpsc::channel();
        self.pending.lock().unwrap().insert(id, tx);
        let mut line = encode(id);
        line.push('\n');
        let written = {
            let mut w = self.writer.lock().unwrap();
            w.write_all(line.as_bytes()).and_then(|_| w.flush())
        };
        if let Err(e) = written {
            self.pending.lock().unwrap().remove(&id);
            return Err(BackendError::Transport(format!("write failed: {e}")).into());
        }
        Ok(Pending {
            id,
            rx,
            timeout: self.timeout,
            pending: Arc::clone(&self.pending),
        })
    }

    pub fn call(&self, op: Op) -> Result<Value> {
        Ok(self.submit(op)?.wait()?)
    }

    pub fn classify_texts(
        &self,
        aspect: &str,
        texts: &[String],
    ) -> Result<Vec<(Stance, [f64; 3])>> {
        let v = self.call(Op::Classify {
            aspect: aspect.to_string(),
            texts: texts.to_vec(),
        })?;
        parse_classify(&v, texts.len())
    }

    pub fn similarity_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        let v = self.call(Op::Similarity {
            pairs: pairs.to_vec(),
        })?;
        parse_scores(&v, pairs.len())
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let v = self.call(Op::Embed {
            texts: texts.to_vec(),
        })?;
        parse_vectors(&v, texts.len(), self.embed_dim)
    }

    pub fn ner_texts(&self, texts: &[String]) -> Result<Vec<Vec<EntityMention>>> {
        let v = self.call(Op::Ner {
            texts: texts.to_vec(),
        })?;
        parse_entities(&v, texts)
    }
}

impl Drop for AdapterClient {
    fn drop(&mut self) {
        // Closing stdin asks the adapter to exit.
        *self.writer.lock().unwrap() = Box::new(std::io::sink());
        let had_child = self.child.is_some();
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_secs(2);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(10))
                    }
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
        // Without a child process the peer owns the stream and the reader
        // thread is left to finish on its own.
        if let Some(r) = self.reader.take() {
            if had_child {
                let _ = r.join();
            }
        }
    }
}

fn fail_all(pending: &PendingMap, err: impl Fn() -> BackendError) {
    for (_, tx) in pending.lock().unwrap().drain() {
        let _ = tx.send(Err(err()));
    }
}

fn read_loop<R: BufRead>(mut reader: R, handshake: Sender<Option<String>>, pending: PendingMap) {
    let mut first = true;
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => {
                if first {
                    let _ = handshake.send(None);
                }
                fail_all(&pending, || {
                    BackendError::Transport("adapter closed its output".into())
                });
                return;
            }
            Ok(_) => {}
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if first {
            first = false;
            let _ = handshake.send(Some(text.to_string()));
            continue;
        }
        let id = match serde_json::from_str::<Value>(text) {
            Ok(v) => v.get("id").and_then(Value::as_u64).map(|id| (id, v)),
            Err(_) => None,
        };
        match id {
            Some((id, v)) => {
                let tx = pending.lock().unwrap().remove(&id);
                match tx {
                    Some(tx) => {
                        let _ = tx.send(Ok(v));
                    }
                    // Late reply for a request that already timed out.
                    None => log::warn!("adapter replied to unknown request id {id}"),
                }
            }
            None => {
                let shown = text.chars().take(200).collect::<String>();
                fail_all(&pending, || BackendError::MalformedResponse(shown.clone()));
            }
        }
    }
}

fn malformed(what: &str, v: &Value) -> Error {
    let shown: String = v.to_string().chars().take(200).collect();
    BackendError::MalformedResponse(format!("{what}: {shown}")).into()
}

fn parse_classify(v: &Value, n: usize) -> Result<Vec<(Stance, [f64; 3])>> {
    let labels = v
        .get("labels")
        .and_then(Value::as_array)
        .filter(|a| a.len() == n)
        .ok_or_else(|| malformed("expected `labels` of matching length", v))?;
    let scores = v.get("scores").and_then(Value::as_array);
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let stance = l
                .as_str()
                .and_then(Stance::parse)
                .ok_or_else(|| malformed("unknown stance label", v))?;
            let probs = match scores.and_then(|s| s.get(i)).and_then(Value::as_array) {
                Some(p) if p.len() == 3 => {
                    let mut out = [0.0; 3];
                    for (o, x) in out.iter_mut().zip(p) {
                        *o = x
                            .as_f64()
                            .ok_or_else(|| malformed("non-numeric score", v))?;
                    }
                    out
                }
                Some(_) => return Err(malformed("score rows need three entries", v)),
                None => {
                    let mut out = [0.0; 3];
                    out[stance.index()] = 1.0;
                    out
                }
            };
            Ok((stance, probs))
        })
        .collect()
}

fn parse_scores(v: &Value, n: usize) -> Result<Vec<f64>> {
    v.get("scores")
        .and_then(Value::as_array)
        .filter(|a| a.len() == n)
        .ok_or_else(|| malformed("expected `scores` of matching length", v))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric score", v)))
        .collect()
}

fn parse_vectors(v: &Value, n: usize, dim: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let rows = v
        .get("vectors")
        .and_then(Value::as_array)
        .filter(|a| a.len() == n)
        .ok_or_else(|| malformed("expected `vectors` of matching length", v))?;
    rows.iter()
        .map(|r| {
            let r = r
                .as_array()
                .ok_or_else(|| malformed("vector is not an array", v))?;
            if dim.is_some_and(|d| d != r.len()) {
                return Err(malformed("vector length differs from embed_dim", v));
            }
            r.iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| malformed("non-numeric component", v))
                })
                .collect()
        })
        .collect()
}

fn parse_entities(v: &Value, texts: &[String]) -> Result<Vec<Vec<EntityMention>>> {
    let rows = v
        .get("entities")
        .and_then(Value::as_array)
        .filter(|a| a.len() == texts.len())
        .ok_or_else(|| malformed("expected `entities` of matching length", v))?;
    rows.iter()
        .zip(texts)
        .map(|(row, text)| {
            let row = row
                .as_array()
                .ok_or_else(|| malformed("entity row is not an array", v))?;
            row.iter()
                .map(|e| {
                    let start = e.get("start").and_then(Value::as_u64).map(|x| x as usize);
                    let end = e.get("end").and_then(Value::as_u64).map(|x| x as usize);
                    let (Some(start), Some(end)) = (start, end) else {
                        return Err(malformed("entity without span", v));
                    };
                    if start >= end || end > text.len() {
                        return Err(malformed("entity span outside its text", v));
                    }
                    Ok(EntityMention {
                        text: e
                            .get("text")
                            .and_then(Value::as_str)
                            .map(str::to_string)
                            .or_else(|| text.get(start..end).map(str::to_string))
                            .unwrap_or_default(),
                        entity_type: EntityType::parse(
                            e.get("type").and_then(Value::as_str).unwrap_or("other"),
                        ),
                        span: (start, end),
                    })
                })
                .collect()
        })
        .collect()
}

impl StanceClassifier for AdapterClient {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    /// Posts are sent in batches, grouped by their earliest-mentioned aspect.
    /// Posts that mention no aspect are labeled `None` locally.
    fn classify(&self, posts: &[Post], aspects: &[Aspect]) -> Result<Vec<ArgumentLabel>> {
        self.handle.require(Capability::Classify)?;
        if aspects.is_empty() {
            return Err(Error::Invalid(
                "classification needs at least one aspect".into(),
            ));
        }
        let matchers = aspect_matchers(aspects);
        let mut labels = Vec::with_capacity(posts.len());
        for batch in posts.chunks(self.batch_size) {
            let texts: Vec<String> = batch.iter().map(Post::text).collect();
            let chosen: Vec<Option<&str>> = texts
                .iter()
                .map(|t| choose_aspect(&lower_words(t), &matchers))
                .collect();
            let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
            for (i, a) in chosen.iter().enumerate() {
                if let Some(a) = a {
                    match groups.iter_mut().find(|(g, _)| g == a) {
                        Some((_, idx)) => idx.push(i),
                        None => groups.push((a, vec![i])),
                    }
                }
            }
            let result: Result<Vec<GroupReply>> = (|| {
                let tickets = groups
                    .iter()
                    .map(|(aspect, idx)| {
                        self.submit(Op::Classify {
                            aspect: aspect.to_string(),
                            texts: idx.iter().map(|&i| texts[i].clone()).collect(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                tickets
                    .into_iter()
                    .zip(&groups)
                    .map(|(t, (_, idx))| {
                        let v = t.wait()?;
                        Ok((idx.clone(), parse_classify(&v, idx.len())?))
                    })
                    .collect()
            })();
            let answered = match result {
                Ok(a) => a,
                Err(e) => {
                    let source = match e {
                        Error::Backend(b) => b,
                        other => BackendError::Transport(other.to_string()),
                    };
                    return Err(BackendError::Batch {
                        failed_ids: batch.iter().map(|p| p.post_id.clone()).collect(),
                        processed: labels,
                        source: Box::new(source),
                    }
                    .into());
                }
            };
            let mut out: Vec<ArgumentLabel> = batch
                .iter()
                .zip(&chosen)
                .map(|(p, a)| ArgumentLabel {
                    post_id: p.post_id.clone(),
                    aspect: a.map(str::to_string),
                    stance: Stance::None,
                    confidence: 1.0,
                    backend_id: self.handle.backend_id.clone(),
                })
                .collect();
            for (idx, results) in answered {
                for (i, (stance, probs)) in idx.into_iter().zip(results) {
                    out[i].stance = stance;
                    out[i].confidence = probs[stance.index()].clamp(0.0, 1.0);
                }
            }
            labels.extend(out);
        }
        Ok(labels)
    }
}

impl SimilarityBackend for AdapterClient {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn similarity(&self, texts: &[&str]) -> Result<SimilarityMatrix> {
        self.handle.require(Capability::Similarity)?;
        let index: Vec<(usize, usize)> = (0..texts.len())
            .flat_map(|i| (i + 1..texts.len()).map(move |j| (i, j)))
            .collect();
        let chunk = self.batch_size * 4;
        let tickets = index
            .chunks(chunk)
            .map(|c| {
                let pairs = c
                    .iter()
                    .map(|&(i, j)| (texts[i].to_string(), texts[j].to_string()))
                    .collect();
                self.submit(Op::Similarity { pairs }).map(|t| (t, c.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = SimilarityMatrix::identity(texts.len());
        let mut k = 0;
        for (t, len) in tickets {
            let v = t.wait()?;
            for s in parse_scores(&v, len)? {
                let (i, j) = index[k];
                m.set(i, j, s);
                k += 1;
            }
        }
        Ok(m)
    }
}

impl EntityRecognizer for AdapterClient {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn recognize(&self, texts: &[&str]) -> Result<Vec<Vec<EntityMention>>> {
        let owned: Vec<String> = texts.iter().map(|s| s.to_string()).collect();
        let mut out = Vec::with_capacity(texts.len());
        for c in owned.chunks(self.batch_size) {
            out.extend(self.ner_texts(c)?);
        }
        Ok(out)
    }
}

impl Embedder for AdapterClient {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let owned: Vec<String> = texts.iter().map(|s| s.to_string()).collect();
        let mut out = Vec::with_capacity(texts.len());
        for c in owned.chunks(self.batch_size) {
            out.extend(self.embed_texts(c)?);
        }
        Ok(out)
    }
}

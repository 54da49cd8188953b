//! Protocol conformance checks runnable against any adapter connection.
//!
//! The same suite is applied to the built-in stub and to external adapters,
//! so a passing run means the client can rely on the adapter's replies.

use std::fmt;

use serde_json::{json, Map, Value};

use super::adapter::{AdapterClient, Op};
use super::{Capability, StanceClassifier};
use crate::error::{BackendError, Error};

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Passed,
    /// The adapter does not advertise the capability the check needs.
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.status {
            Status::Passed => write!(f, "PASS {}", self.name),
            Status::Skipped => write!(f, "SKIP {}", self.name),
            Status::Failed(why) => write!(f, "FAIL {}: {why}", self.name),
        }
    }
}

type Outcome = Result<(), String>;
type Probe = fn(&AdapterClient) -> Outcome;

fn status(has: bool, run: impl FnOnce() -> Outcome) -> Status {
    if !has {
        return Status::Skipped;
    }
    match run() {
        Ok(()) => Status::Passed,
        Err(e) => Status::Failed(e),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs every check and returns them in a fixed order.
pub fn run_suite(client: &AdapterClient) -> Vec<Check> {
    let caps = &client.handle().capabilities;
    let has = |c| caps.contains(&c);
    let mut checks = vec![Check {
        name: "handshake",
        status: status(true, || handshake(client)),
    }];
    let list: [(&'static str, bool, Probe); 6] = [
        (
            "similarity identity",
            has(Capability::Similarity),
            similarity_identity,
        ),
        ("embed shape", has(Capability::Embed), embed_shape),
        ("classify shape", has(Capability::Classify), classify_shape),
        ("ner spans", has(Capability::Ner), ner_spans),
        ("id matching", !caps.is_empty(), id_matching),
        ("error isolation", !caps.is_empty(), error_isolation),
    ];
    for (name, available, f) in list {
        checks.push(Check {
            name,
            status: status(available, || f(client)),
        });
    }
    checks
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks
        .iter()
        .all(|c| !matches!(c.status, Status::Failed(_)))
}

fn handshake(client: &AdapterClient) -> Outcome {
    let caps = &client.handle().capabilities;
    ensure(!caps.is_empty(), || {
        "no known capabilities advertised".into()
    })?;
    if caps.contains(&Capability::Embed) {
        ensure(client.embed_dim().is_some_and(|d| d > 0), || {
            "embed advertised without a positive embed_dim".into()
        })?;
    }
    Ok(())
}

fn err(e: Error) -> String {
    e.to_string()
}

fn similarity_identity(client: &AdapterClient) -> Outcome {
    let pairs = vec![
        ("a".to_string(), "a".to_string()),
        ("soil health".to_string(), "soil health".to_string()),
        ("crop yields".to_string(), "fence posts".to_string()),
    ];
    let scores = client.similarity_pairs(&pairs).map_err(err)?;
    ensure(scores.iter().all(|s| (0.0..=1.0).contains(s)), || {
        format!("scores outside [0, 1]: {scores:?}")
    })?;
    ensure(scores[0] >= 0.95 && scores[1] >= 0.95, || {
        format!("identical strings scored {} and {}", scores[0], scores[1])
    })
}

fn embed_shape(client: &AdapterClient) -> Outcome {
    let dim = client.embed_dim().unwrap_or(0);
    let texts = vec!["x".to_string(), "two words".to_string(), String::new()];
    let vecs = client.embed_texts(&texts).map_err(err)?;
    ensure(vecs.len() == texts.len(), || {
        format!("{} vectors for {} texts", vecs.len(), texts.len())
    })?;
    ensure(vecs.iter().all(|v| v.len() == dim), || {
        format!(
            "vector lengths {:?}, declared {dim}",
            vecs.iter().map(Vec::len).collect::<Vec<_>>()
        )
    })?;
    ensure(vecs.iter().flatten().all(|x| x.is_finite()), || {
        "non-finite component".into()
    })
}

fn classify_shape(client: &AdapterClient) -> Outcome {
    let texts = vec![
        "GMO crops help farmers because yields improve".to_string(),
        "nice photo!".to_string(),
    ];
    let out = client.classify_texts("GMO", &texts).map_err(err)?;
    ensure(out.len() == texts.len(), || {
        format!("{} labels for {} texts", out.len(), texts.len())
    })?;
    for (_, probs) in &out {
        ensure(probs.iter().all(|p| (0.0..=1.0).contains(p)), || {
            format!("probabilities {probs:?}")
        })?;
        let sum: f64 = probs.iter().sum();
        ensure((sum - 1.0).abs() < 1e-3, || {
            format!("probabilities sum to {sum}")
        })?;
    }
    Ok(())
}

fn ner_spans(client: &AdapterClient) -> Outcome {
    let texts = vec![
        "I bought John Deere parts in Iowa.".to_string(),
        String::new(),
    ];
    let out = client.ner_texts(&texts).map_err(err)?;
    ensure(out.len() == texts.len(), || {
        format!("{} entity lists for {} texts", out.len(), texts.len())
    })?;
    for (mentions, text) in out.iter().zip(&texts) {
        for m in mentions {
            ensure(m.span.0 < m.span.1 && m.span.1 <= text.len(), || {
                format!("span {:?} outside text of {} bytes", m.span, text.len())
            })?;
        }
    }
    Ok(())
}

/// A request whose reply length reveals which request it answers.
fn sized_op(client: &AdapterClient, k: usize) -> Op {
    let caps = &client.handle().capabilities;
    let texts: Vec<String> = (0..k).map(|i| format!("text number {i}")).collect();
    if caps.contains(&Capability::Similarity) {
        Op::Similarity {
            pairs: texts.iter().map(|t| (t.clone(), t.clone())).collect(),
        }
    } else if caps.contains(&Capability::Embed) {
        Op::Embed { texts }
    } else if caps.contains(&Capability::Ner) {
        Op::Ner { texts }
    } else {
        Op::Classify {
            aspect: "GMO".into(),
            texts,
        }
    }
}

fn reply_len(v: &Value) -> Option<usize> {
    ["scores", "vectors", "entities", "labels"]
        .iter()
        .find_map(|k| v.get(*k).and_then(Value::as_array).map(Vec::len))
}

fn id_matching(client: &AdapterClient) -> Outcome {
    let tickets = (1..=8)
        .map(|k| client.submit(sized_op(client, k)).map(|t| (k, t)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    for (k, t) in tickets.into_iter().rev() {
        let id = t.id();
        let v = t.wait().map_err(|e| e.to_string())?;
        ensure(v.get("id").and_then(Value::as_u64) == Some(id), || {
            format!("reply for {id} carries id {:?}", v.get("id"))
        })?;
        ensure(reply_len(&v) == Some(k), || {
            format!("request {id} with {k} items got {v}")
        })?;
    }
    Ok(())
}

fn error_isolation(client: &AdapterClient) -> Outcome {
    let mut bogus = Map::new();
    bogus.insert("op".into(), json!("__unsupported__"));
    match client.submit_raw(bogus).map_err(err)?.wait() {
        Err(BackendError::Remote { .. }) => {}
        Ok(v) => return Err(format!("unknown op answered without error: {v}")),
        Err(e) => return Err(format!("unknown op broke the connection: {e}")),
    }
    let v = client.call(sized_op(client, 2)).map_err(err)?;
    ensure(reply_len(&v) == Some(2), || {
        format!("follow-up request got {v}")
    })
}

//! Deterministic in-crate adapter server.
//!
//! Serves every capability of the adapter protocol without any model, so
//! the client and the command-line pipeline can be exercised end to end.
//! Texts containing `__fail__` produce a per-request error.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

use super::adapter::{Handshake, Op, Request, PROTOCOL_NAME, PROTOCOL_VERSION};
use super::lexicon::LexiconClassifier;
use super::ner::reference_ner;
use super::Stance;
use crate::text::{is_stopword, lower_words};

pub const FAIL_MARKER: &str = "__fail__";

#[derive(Debug, Clone)]
pub struct StubOptions {
    pub embed_dim: usize,
    /// Replies are held until this many are buffered, then written in
    /// reverse order. `1` answers immediately.
    pub reorder_window: usize,
    pub capabilities: Vec<String>,
}

impl Default for StubOptions {
    fn default() -> Self {
        Self {
            embed_dim: 384,
            reorder_window: 1,
            capabilities: ["classify", "similarity", "embed", "ner"]
                .map(String::from)
                .to_vec(),
        }
    }
}

pub fn handshake_line(opts: &StubOptions) -> String {
    serde_json::to_string(&Handshake {
        protocol: PROTOCOL_NAME.into(),
        version: PROTOCOL_VERSION,
        capabilities: opts.capabilities.clone(),
        embed_dim: opts
            .capabilities
            .iter()
            .any(|c| c == "embed")
            .then_some(opts.embed_dim),
    })
    .expect("handshake serializes")
}

#[derive(Serialize)]
struct ErrorReply<'a> {
    id: Option<u64>,
    error: &'a str,
}

/// Held replies are released after this long without new input, so a
/// client waiting on its last requests is never stalled.
pub const REORDER_IDLE: Duration = Duration::from_millis(20);

/// Runs the stub protocol loop until `input` is exhausted.
pub fn serve<R: BufRead + Send, W: Write>(
    input: R,
    mut output: W,
    opts: &StubOptions,
) -> io::Result<()> {
    writeln!(output, "{}", handshake_line(opts))?;
    output.flush()?;
    let classifier = LexiconClassifier::default();
    let window = opts.reorder_window.max(1);
    if window == 1 {
        for line in input.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                writeln!(output, "{}", respond(&line, opts, &classifier))?;
                output.flush()?;
            }
        }
        return Ok(());
    }
    let release = |held: &mut Vec<String>, output: &mut W| -> io::Result<()> {
        for r in held.drain(..).rev() {
            writeln!(output, "{r}")?;
        }
        output.flush()
    };
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        scope.spawn(move || {
            for line in input.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut held: Vec<String> = Vec::new();
        loop {
            match rx.recv_timeout(REORDER_IDLE) {
                Ok(line) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    held.push(respond(&line, opts, &classifier));
                    if held.len() >= window {
                        release(&mut held, &mut output)?;
                    }
                }
                Err(RecvTimeoutError::Timeout) => release(&mut held, &mut output)?,
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        release(&mut held, &mut output)
    })
}

fn error_line(id: Option<u64>, message: &str) -> String {
    serde_json::to_string(&ErrorReply { id, error: message }).expect("error serializes")
}

fn respond(line: &str, opts: &StubOptions, classifier: &LexiconClassifier) -> String {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(Value::as_u64));
            return error_line(id, &format!("bad request: {e}"));
        }
    };
    let id = req.id;
    let cap = req.op.capability().to_string();
    if !opts.capabilities.contains(&cap) {
        return error_line(Some(id), &format!("capability `{cap}` not served"));
    }
    let texts: Vec<&str> = match &req.op {
        Op::Classify { texts, .. } | Op::Embed { texts } | Op::Ner { texts } => {
            texts.iter().map(String::as_str).collect()
        }
        Op::Similarity { pairs } => pairs
            .iter()
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .collect(),
    };
    if texts.iter().any(|t| t.contains(FAIL_MARKER)) {
        return error_line(Some(id), "injected failure");
    }
    let body = match &req.op {
        Op::Classify { texts, .. } => {
            let (labels, scores): (Vec<&str>, Vec<[f64; 3]>) = texts
                .iter()
                .map(|t| {
                    let stance = match classifier.cue_balance(&lower_words(t)) {
                        b if b > 0 => Stance::For,
                        b if b < 0 => Stance::Against,
                        _ => Stance::None,
                    };
                    let mut p = [0.1; 3];
                    p[stance.index()] = 0.8;
                    (stance.as_str(), p)
                })
                .unzip();
            json!({"id": id, "labels": labels, "scores": scores})
        }
        Op::Similarity { pairs } => {
            let scores: Vec<f64> = pairs.iter().map(|(a, b)| jaccard(a, b)).collect();
            json!({"id": id, "scores": scores})
        }
        Op::Embed { texts } => {
            let vectors: Vec<Vec<f64>> = texts
                .iter()
                .map(|t| hashed_embedding(t, opts.embed_dim))
                .collect();
            json!({"id": id, "vectors": vectors})
        }
        Op::Ner { texts } => {
            let entities: Vec<Vec<Value>> = texts
                .iter()
                .map(|t| {
                    reference_ner(t)
                        .into_iter()
                        .map(|m| json!({"text": m.text, "type": "other", "start": m.span.0, "end": m.span.1}))
                        .collect()
                })
                .collect();
            json!({"id": id, "entities": entities})
        }
    };
    body.to_string()
}

fn content_words(text: &str) -> BTreeSet<String> {
    lower_words(text)
        .into_iter()
        .map(|(w, _)| w)
        .filter(|w| !is_stopword(w))
        .collect()
}

fn jaccard(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let (wa, wb) = (content_words(a), content_words(b));
    let union = wa.union(&wb).count();
    if union == 0 {
        0.0
    } else {
        wa.intersection(&wb).count() as f64 / union as f64
    }
}

// FNV-1a feature hashing
fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if dim == 0 {
        return v;
    }
    for w in content_words(text) {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in w.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        v[(h % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handshake_is_exact() {
        assert_eq!(
            handshake_line(&StubOptions::default()),
            r#"{"protocol":"argusense-adapter","version":1,"capabilities":["classify","similarity","embed","ner"],"embed_dim":384}"#
        );
    }

    #[test]
    fn malformed_request_gets_null_id() {
        let input = b"not json\n{\"id\":3,\"op\":\"embed\",\"texts\":[\"x\"]}\n";
        let mut out = Vec::new();
        serve(&input[..], &mut out, &StubOptions::default()).unwrap();
        let lines: Vec<Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1]["id"], Value::Null);
        assert!(lines[1]["error"].is_string());
        assert_eq!(lines[2]["id"], 3);
        assert_eq!(lines[2]["vectors"][0].as_array().unwrap().len(), 384);
    }
}

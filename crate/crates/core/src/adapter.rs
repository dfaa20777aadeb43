//! External metrics over a line protocol on a child process's stdio.
//!
//! The child first prints a capability line
//! `{"protocol":1,"name":..,"scope":"sample"|"set","needs":{..}}`. Each
//! batch is a run of request lines followed by `{"flush":true}`; the child
//! answers every request (in any order) with `{"id":..,"score":..}` and
//! closes the batch with `{"flushed":true}`. Set-scope adapters answer a
//! batch with a single `{"id":"__set__","score":..}`. A response may carry
//! `"error":"..."` instead of a score, which aborts the run.
//!
//! Candidate providers speak the same framing with requests
//! `{"id":..,"tokens":[..],"position":n}` and responses
//! `{"id":..,"candidates":[..]}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::exec::Exec;
use crate::metrics::{self, Builtin, Metric, MetricDescriptor, Needs, Scope};
use crate::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const SET_ID: &str = "__set__";
pub const TIMEOUT_ENV: &str = "STRESSLAB_ADAPTER_TIMEOUT";

const DEFAULT_TIMEOUT: f64 = 60.0;
const DEFAULT_BATCH: usize = 64;

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT
}

fn default_batch() -> usize {
    DEFAULT_BATCH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub name: String,
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Expected scope; checked against the handshake when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<Scope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub needs: Option<Needs>,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl AdapterConfig {
    pub fn new(name: impl Into<String>, command: Vec<String>) -> Self {
        AdapterConfig {
            name: name.into(),
            command,
            scope: None,
            needs: None,
            timeout: DEFAULT_TIMEOUT,
            batch_size: DEFAULT_BATCH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.first().is_none_or(|c| c.trim().is_empty()) {
            return Err(Error::invalid(format!("adapter {}: empty command", self.name)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid(format!("adapter {}: batch_size must be at least 1", self.name)));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(Error::invalid(format!("adapter {}: timeout must be positive", self.name)));
        }
        Ok(())
    }

    /// Timeout in seconds, with the environment override applied.
    pub fn effective_timeout(&self) -> Result<f64> {
        match std::env::var(TIMEOUT_ENV) {
            Ok(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|t| *t > 0.0 && t.is_finite())
                .ok_or_else(|| Error::invalid(format!("{TIMEOUT_ENV}={v:?} is not a positive number"))),
            Err(_) => Ok(self.timeout),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capability {
    pub protocol: u32,
    pub name: String,
    pub scope: Scope,
    #[serde(default)]
    pub needs: Needs,
}

/// One hypothesis to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub id: String,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    pub score: f64,
    /// Hypothesis as the adapter received it; only test doubles send this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo: Option<String>,
}

#[derive(Serialize)]
struct CandidateRequest<'a> {
    id: &'a str,
    tokens: &'a [String],
    position: usize,
}

#[derive(Deserialize)]
struct CandidateResponse {
    id: String,
    candidates: Vec<String>,
}

/// A running adapter process.
pub struct AdapterClient {
    name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    batch_size: usize,
    capability: Capability,
    next_id: u64,
}

impl std::fmt::Debug for AdapterClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterClient")
            .field("name", &self.name)
            .field("pid", &self.child.id())
            .field("capability", &self.capability)
            .finish()
    }
}

impl AdapterClient {
    /// Start the process and read its capability line.
    pub fn spawn(cfg: &AdapterConfig) -> Result<Self> {
        cfg.validate()?;
        let timeout = cfg.effective_timeout()?;
        let mut child = Command::new(&cfg.command[0])
            .args(&cfg.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Adapter {
                adapter: cfg.name.clone(),
                message: format!("cannot start {:?}: {e}", cfg.command[0]),
            })?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name(format!("adapter-{}", cfg.name))
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let stop = line.is_err();
                    if tx.send(line).is_err() || stop {
                        break;
                    }
                }
            })
            .map_err(|e| Error::io("starting adapter reader thread", e))?;
        let mut client = AdapterClient {
            name: cfg.name.clone(),
            child,
            stdin,
            lines: rx,
            timeout: Duration::from_secs_f64(timeout),
            batch_size: cfg.batch_size,
            capability: Capability {
                protocol: PROTOCOL_VERSION,
                name: cfg.name.clone(),
                scope: Scope::Sample,
                needs: Needs::default(),
            },
            next_id: 0,
        };
        let deadline = Instant::now() + client.timeout;
        let line = client.recv(deadline, 1)?;
        let cap: Capability = serde_json::from_str(&line)
            .map_err(|e| client.err(format!("bad capability line {line:?}: {e}")))?;
        if cap.protocol != PROTOCOL_VERSION {
            return Err(client.err(format!("protocol {} not supported (want {PROTOCOL_VERSION})", cap.protocol)));
        }
        if let Some(scope) = cfg.scope {
            if scope != cap.scope {
                return Err(client.err(format!("reports scope {:?}, configured as {scope:?}", cap.scope)));
            }
        }
        if let Some(needs) = cfg.needs {
            if needs != cap.needs {
                return Err(client.err(format!("reports needs {:?}, configured as {needs:?}", cap.needs)));
            }
        }
        log::debug!("adapter {} ready: {:?}", cfg.name, cap);
        client.capability = cap;
        Ok(client)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capability(&self) -> &Capability {
        &self.capability
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Adapter {
            adapter: self.name.clone(),
            message: message.into(),
        }
    }

    fn exited(&mut self) -> Error {
        let status = match self.child.try_wait() {
            Ok(Some(s)) => s.to_string(),
            _ => "closed its output".to_string(),
        };
        self.err(format!("process exited ({status})"))
    }

    fn recv(&mut self, deadline: Instant, pending: usize) -> Result<String> {
        let left = deadline.saturating_duration_since(Instant::now());
        match self.lines.recv_timeout(left) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(self.err(format!("reading output: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout {
                adapter: self.name.clone(),
                seconds: self.timeout.as_secs_f64(),
                pending,
            }),
            Err(RecvTimeoutError::Disconnected) => {
                // give the process a moment to be reaped so the status is known
                thread::sleep(Duration::from_millis(20));
                Err(self.exited())
            }
        }
    }

    fn send_lines(&mut self, lines: &[String]) -> Result<()> {
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(self.err("input already closed"));
        };
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        buf.push_str("{\"flush\":true}\n");
        let res = stdin.write_all(buf.as_bytes()).and_then(|_| stdin.flush());
        res.map_err(|_| self.exited())
    }

    /// Send one batch and collect every line up to the flush marker.
    pub fn exchange(&mut self, requests: &[String]) -> Result<Vec<Value>> {
        self.send_lines(requests)?;
        let deadline = Instant::now() + self.timeout;
        let mut out = Vec::new();
        loop {
            let line = self.recv(deadline, requests.len().saturating_sub(out.len()))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line)
                .map_err(|e| self.err(format!("malformed response {line:?}: {e}")))?;
            if v.get("flushed").and_then(Value::as_bool) == Some(true) {
                return Ok(out);
            }
            if let Some(msg) = v.get("error") {
                return Err(self.err(format!("reported error: {msg} (payload {line})")));
            }
            out.push(v);
        }
    }

    /// Score items; the result is in input order. Set-scope adapters return
    /// a single response with id [`SET_ID`].
    pub fn score_batch(&mut self, items: &[ScoreItem]) -> Result<Vec<ScoreResponse>> {
        let mut seen_ids = HashSet::new();
        for it in items {
            if it.id == SET_ID || !seen_ids.insert(it.id.as_str()) {
                return Err(Error::invalid(format!("request id {:?} is reserved or repeated", it.id)));
            }
        }
        let lines = |chunk: &[ScoreItem]| -> Vec<String> {
            chunk
                .iter()
                .map(|i| serde_json::to_string(i).expect("request serializes"))
                .collect()
        };
        if self.capability.scope == Scope::Set {
            let raw = self.exchange(&lines(items))?;
            let mut got = self.parse_scores(raw)?;
            if got.len() != 1 || got[0].id != SET_ID {
                let ids: Vec<&str> = got.iter().map(|r| r.id.as_str()).collect();
                return Err(self.err(format!("set-scope batch expects one {SET_ID:?} response, got {ids:?}")));
            }
            return Ok(vec![got.remove(0)]);
        }
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.batch_size) {
            let raw = self.exchange(&lines(chunk))?;
            let mut by_id: HashMap<String, ScoreResponse> = HashMap::new();
            for r in self.parse_scores(raw)? {
                if !chunk.iter().any(|i| i.id == r.id) {
                    return Err(self.err(format!("response for unknown id {:?}", r.id)));
                }
                let id = r.id.clone();
                if by_id.insert(id.clone(), r).is_some() {
                    return Err(self.err(format!("duplicate response for id {id:?}")));
                }
            }
            for it in chunk {
                match by_id.remove(&it.id) {
                    Some(r) => out.push(r),
                    None => return Err(self.err(format!("no response for id {:?}", it.id))),
                }
            }
        }
        Ok(out)
    }

    fn parse_scores(&self, raw: Vec<Value>) -> Result<Vec<ScoreResponse>> {
        raw.into_iter()
            .map(|v| {
                let r: ScoreResponse = serde_json::from_value(v.clone())
                    .map_err(|e| self.err(format!("malformed response {v}: {e}")))?;
                if !r.score.is_finite() {
                    return Err(self.err(format!("non-finite score for id {:?} (payload {v})", r.id)));
                }
                Ok(r)
            })
            .collect()
    }

    /// Ask a candidate-provider process for substitutes at `position`.
    pub fn candidates(&mut self, tokens: &[String], position: usize) -> Result<Vec<String>> {
        self.next_id += 1;
        let id = format!("c{}", self.next_id);
        let req = serde_json::to_string(&CandidateRequest {
            id: &id,
            tokens,
            position,
        })
        .expect("request serializes");
        let raw = self.exchange(&[req])?;
        let mut out = None;
        for v in raw {
            let r: CandidateResponse = serde_json::from_value(v.clone())
                .map_err(|e| self.err(format!("malformed candidate response {v}: {e}")))?;
            if r.id != id || out.is_some() {
                return Err(self.err(format!("unexpected candidate response for id {:?}", r.id)));
            }
            out = Some(r.candidates);
        }
        out.ok_or_else(|| self.err(format!("no response for id {id:?}")))
    }
}

impl Drop for AdapterClient {
    fn drop(&mut self) {
        drop(self.stdin.take());
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Scores of one hypothesis set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetScore {
    /// Per-sample scores in input order; `None` for set-scope metrics.
    pub per_sample: Option<Vec<f64>>,
    pub mean: f64,
}

/// A metric the harness can score sets with: built-in or external.
pub enum Scorer {
    Builtin(Builtin),
    Adapter {
        descriptor: MetricDescriptor,
        client: Mutex<AdapterClient>,
    },
}

impl std::fmt::Debug for Scorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Scorer").field(&self.descriptor().name).finish()
    }
}

impl Scorer {
    pub fn builtin(name: &str) -> Result<Self> {
        metrics::builtin(name).map(Scorer::Builtin)
    }

    pub fn adapter(cfg: &AdapterConfig) -> Result<Self> {
        let client = AdapterClient::spawn(cfg)?;
        let cap = client.capability().clone();
        Ok(Scorer::Adapter {
            descriptor: MetricDescriptor {
                name: cfg.name.clone(),
                higher_is_better: true,
                scope: cap.scope,
                needs: cap.needs,
                multi_reference: true,
            },
            client: Mutex::new(client),
        })
    }

    pub fn descriptor(&self) -> &MetricDescriptor {
        match self {
            Scorer::Builtin(b) => b.descriptor(),
            Scorer::Adapter { descriptor, .. } => descriptor,
        }
    }

    pub fn name(&self) -> &str {
        &self.descriptor().name
    }

    /// Score a hypothesis set. Fields the metric does not need are not sent.
    pub fn score_set(&self, items: &[ScoreItem], exec: &Exec) -> Result<SetScore> {
        if items.is_empty() {
            return Err(Error::invalid("empty hypothesis set"));
        }
        match self {
            Scorer::Builtin(b) => {
                let per = exec.try_map(items, |it| b.score(&it.hypothesis, it.source.as_deref(), &it.references))?;
                let mean = metrics::mean(&per);
                Ok(SetScore {
                    per_sample: Some(per),
                    mean,
                })
            }
            Scorer::Adapter { descriptor, client } => {
                let needs = descriptor.needs;
                let trimmed: Vec<ScoreItem> = items
                    .iter()
                    .map(|it| ScoreItem {
                        id: it.id.clone(),
                        hypothesis: it.hypothesis.clone(),
                        source: it.source.clone().filter(|_| needs.source),
                        references: if needs.references { it.references.clone() } else { Vec::new() },
                    })
                    .collect();
                let mut client = client.lock().unwrap_or_else(|p| p.into_inner());
                let resp = client.score_batch(&trimmed)?;
                if descriptor.scope == Scope::Set {
                    return Ok(SetScore {
                        per_sample: None,
                        mean: resp[0].score,
                    });
                }
                let per: Vec<f64> = resp.iter().map(|r| r.score).collect();
                let mean = metrics::mean(&per);
                Ok(SetScore {
                    per_sample: Some(per),
                    mean,
                })
            }
        }
    }

    /// Score a single hypothesis (sample-scope only).
    pub fn score_one(&self, item: &ScoreItem) -> Result<f64> {
        if self.descriptor().scope == Scope::Set {
            return Err(Error::invalid(format!("metric {} is set-scope", self.name())));
        }
        let s = self.score_set(std::slice::from_ref(item), &Exec::Sequential)?;
        Ok(s.mean)
    }
}

/// Scorers by metric name.
pub type ScorerMap = BTreeMap<String, Scorer>;

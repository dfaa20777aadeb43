//! Test double for the adapter protocol.
//!
//! Answers every request with a fixed score and echoes the hypothesis back.
//! Flags make it misbehave in controlled ways:
//!
//! ```text
//! --name NAME            capability name (default "echo")
//! --score X              score to return (default 0.5)
//! --scope sample|set     metric scope (default sample)
//! --needs a,b            needs flags: source, references
//! --omit ID              never answer this id
//! --hang                 read requests but never answer
//! --die-after N          exit with status 3 after reading N requests
//! --garbage              answer with a line that is not JSON
//! --candidates a,b,c     act as a candidate provider returning this list
//! ```

use std::io::{self, BufRead, Write};
use std::process::exit;

use serde_json::{json, Value};

struct Opts {
    name: String,
    score: f64,
    scope: String,
    needs_source: bool,
    needs_references: bool,
    omit: Option<String>,
    hang: bool,
    die_after: Option<usize>,
    garbage: bool,
    candidates: Option<Vec<String>>,
}

fn parse_args() -> Opts {
    let mut o = Opts {
        name: "echo".into(),
        score: 0.5,
        scope: "sample".into(),
        needs_source: false,
        needs_references: false,
        omit: None,
        hang: false,
        die_after: None,
        garbage: false,
        candidates: None,
    };
    let mut args = std::env::args().skip(1);
    let value = |args: &mut dyn Iterator<Item = String>, flag: &str| {
        args.next().unwrap_or_else(|| {
            eprintln!("echo-adapter: {flag} needs a value");
            exit(64)
        })
    };
    while let Some(a) = args.next() {
        match a.as_str() {
            "--name" => o.name = value(&mut args, &a),
            "--score" => {
                o.score = value(&mut args, &a).parse().unwrap_or_else(|_| {
                    eprintln!("echo-adapter: bad --score");
                    exit(64)
                })
            }
            "--scope" => o.scope = value(&mut args, &a),
            "--needs" => {
                for need in value(&mut args, &a).split(',') {
                    match need {
                        "source" => o.needs_source = true,
                        "references" => o.needs_references = true,
                        _ => {}
                    }
                }
            }
            "--omit" => o.omit = Some(value(&mut args, &a)),
            "--hang" => o.hang = true,
            "--die-after" => o.die_after = value(&mut args, &a).parse().ok(),
            "--garbage" => o.garbage = true,
            "--candidates" => {
                o.candidates = Some(
                    value(&mut args, &a)
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect(),
                )
            }
            other => {
                eprintln!("echo-adapter: unknown flag {other}");
                exit(64)
            }
        }
    }
    o
}

fn main() {
    let o = parse_args();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let cap = json!({
        "protocol": 1,
        "name": o.name,
        "scope": o.scope,
        "needs": {"source": o.needs_source, "references": o.needs_references},
    });
    writeln!(out, "{cap}").and_then(|_| out.flush()).ok();

    let mut pending: Vec<Value> = Vec::new();
    let mut seen = 0usize;
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        let Ok(v) = serde_json::from_str::<Value>(&line) else {
            eprintln!("echo-adapter: bad request line");
            exit(65)
        };
        if v.get("flush").and_then(Value::as_bool) != Some(true) {
            seen += 1;
            if o.die_after.is_some_and(|n| seen > n) {
                exit(3);
            }
            pending.push(v);
            continue;
        }
        if o.hang {
            pending.clear();
            continue;
        }
        let mut reply = String::new();
        if o.garbage {
            reply.push_str("this is not json\n");
        } else if o.scope == "set" {
            reply.push_str(&json!({"id": "__set__", "score": o.score}).to_string());
            reply.push('\n');
        } else {
            // answer in reverse order; clients must match by id
            for req in pending.iter().rev() {
                let id = req.get("id").cloned().unwrap_or(Value::Null);
                if o.omit.as_deref().is_some_and(|x| id == x) {
                    continue;
                }
                let resp = match &o.candidates {
                    Some(c) => json!({"id": id, "candidates": c}),
                    None => json!({"id": id, "score": o.score, "echo": req.get("hypothesis")}),
                };
                reply.push_str(&resp.to_string());
                reply.push('\n');
            }
        }
        reply.push_str("{\"flushed\":true}\n");
        pending.clear();
        if out.write_all(reply.as_bytes()).and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}

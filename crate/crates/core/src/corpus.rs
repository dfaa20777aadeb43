//! Evaluation corpora: samples with optional source, references and a gold
//! hypothesis, stored one JSON record per line.
//!
//! ```text
//! {"id":"s1","source":null,"references":["..."],"gold":"..."}
//! ```
//!
//! A corpus may start with a single metadata record `{"metadata":{...}}`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    OpenEnded,
    Translation,
    Summarization,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::OpenEnded => "open-ended",
            Task::Translation => "translation",
            Task::Summarization => "summarization",
        }
    }

    fn needs_references(&self) -> bool {
        !matches!(self, Task::OpenEnded)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open-ended" | "open_ended" | "open" => Ok(Task::OpenEnded),
            "translation" | "mt" => Ok(Task::Translation),
            "summarization" | "sum" => Ok(Task::Summarization),
            other => Err(Error::invalid(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub source: Option<String>,
    pub references: Vec<String>,
    pub gold: String,
}

impl Sample {
    pub fn new(id: impl Into<String>, gold: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            source: None,
            references: Vec::new(),
            gold: gold.into(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.references.push(reference.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub task: Task,
    pub samples: Vec<Sample>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct MetadataRecord {
    metadata: BTreeMap<String, String>,
}

impl Corpus {
    /// Build and validate a corpus.
    pub fn new(task: Task, samples: Vec<Sample>) -> Result<Self> {
        let corpus = Corpus {
            task,
            samples,
            metadata: BTreeMap::new(),
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("empty corpus"));
        }
        let mut seen = HashSet::new();
        for s in &self.samples {
            validate_sample(s, self.task)?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate id {:?}", s.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// The gold hypothesis set.
    pub fn golds(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.gold.as_str())
    }

    /// Serialize to the line format.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        if !self.metadata.is_empty() {
            let meta = MetadataRecord {
                metadata: self.metadata.clone(),
            };
            out.push_str(&serde_json::to_string(&meta).expect("metadata serializes"));
            out.push('\n');
        }
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse the line format. `origin` is only used in error messages.
    pub fn from_lines(body: &str, task: Task, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut samples = Vec::new();
        let mut metadata = BTreeMap::new();
        let mut seen = HashSet::new();
        for (n, line) in body.lines().enumerate() {
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
            if value.get("metadata").is_some() && value.get("id").is_none() {
                if !samples.is_empty() || !metadata.is_empty() {
                    return Err(parse_err(lineno, "metadata record must come first".into()));
                }
                let meta: MetadataRecord =
                    serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
                metadata = meta.metadata;
                continue;
            }
            let sample: Sample =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            validate_sample(&sample, task).map_err(|e| parse_err(lineno, e.to_string()))?;
            if !seen.insert(sample.id.clone()) {
                return Err(parse_err(lineno, format!("duplicate id {:?}", sample.id)));
            }
            samples.push(sample);
        }
        if samples.is_empty() {
            return Err(parse_err(0, "empty corpus".into()));
        }
        Ok(Corpus {
            task,
            samples,
            metadata,
        })
    }
}

fn validate_sample(s: &Sample, task: Task) -> Result<()> {
    if s.id.is_empty() {
        return Err(Error::invalid("empty id"));
    }
    if s.gold.trim().is_empty() {
        return Err(Error::invalid(format!("sample {:?}: empty gold", s.id)));
    }
    if task.needs_references() && s.references.is_empty() {
        return Err(Error::invalid(format!(
            "sample {:?}: {task} corpora need at least one reference",
            s.id
        )));
    }
    Ok(())
}

pub fn load_corpus(path: &Path, task: Task) -> Result<Corpus> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading corpus {}", path.display()), e))?;
    Corpus::from_lines(&body, task, path)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, corpus.to_lines())
        .map_err(|e| Error::io(format!("writing corpus {}", path.display()), e))
}

/// Default token budget for cleaned paragraphs.
pub const WIKITEXT_MAX_LEN: usize = 256;

const GLUE_BEFORE: [&str; 10] = [".", ",", "?", "!", ":", ";", ")", "%", "'s", "'S"];

/// Undo WikiText tokenization artifacts and cut the paragraph at the last
/// full sentence that keeps it within `max_len` tokens.
///
/// * whitespace runs collapse to one space;
/// * `@.@`, `@-@` and `@,@` join their neighbours (`3 @.@ 5` becomes `3.5`);
/// * no space before `. , ? ! : ; ) % 's`, none after `(`;
/// * bare `"` alternate between opening (glued right) and closing (glued left).
pub fn clean_wikitext(raw: &str, max_len: usize) -> Result<String> {
    if raw.trim().is_empty() {
        return Err(Error::invalid("empty text"));
    }
    if max_len == 0 {
        return Err(Error::invalid("max_len must be positive"));
    }
    let cleaned = apply_wikitext_rules(raw);
    truncate_to_sentences(&cleaned, max_len)
}

fn apply_wikitext_rules(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut glue_next = true; // nothing before the first piece
    let mut quote_open = false;
    for word in raw.split_whitespace() {
        let (piece, glue_prev, glue_after) = match word {
            "@.@" => (".", true, true),
            "@-@" => ("-", true, true),
            "@,@" => (",", true, true),
            "(" => ("(", false, true),
            "\"" => {
                quote_open = !quote_open;
                if quote_open {
                    ("\"", false, true)
                } else {
                    ("\"", true, false)
                }
            }
            w if GLUE_BEFORE.contains(&w) => (w, true, false),
            w => (w, false, false),
        };
        if !(glue_prev || glue_next) {
            out.push(' ');
        }
        // inline forms like "3@.@5"
        out.push_str(&piece.replace("@.@", ".").replace("@-@", "-").replace("@,@", ","));
        glue_next = glue_after;
    }
    out
}

fn truncate_to_sentences(text: &str, max_len: usize) -> Result<String> {
    let toks = annotate::tokens(text);
    let ends = annotate::sentence_byte_ends(text);
    let mut budget = 0;
    let mut cut = None;
    let mut start_tok = 0;
    for (byte_end, len) in ends {
        budget += len;
        if budget > max_len {
            break;
        }
        if annotate::is_full_sentence(&toks[start_tok..start_tok + len]) {
            cut = Some(byte_end);
        }
        start_tok += len;
    }
    match cut {
        Some(end) => Ok(text[..end].trim_end().to_string()),
        None => Err(Error::invalid("no sentence boundary within max_len")),
    }
}

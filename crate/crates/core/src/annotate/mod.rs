//! Tokenization, sentence splitting and coarse POS / entity labels.
//!
//! Tokenization splits on whitespace and isolates the marks `. , ? ! : ;`
//! as standalone tokens. A `.` or `,` between two digits stays inside the
//! token so numbers like `3.5` and `1,000` survive. A sentence ends after
//! `.`, `?` or `!` (plus any closing quotes or brackets glued to it) when
//! the next token starts with a capital letter after whitespace, or at the
//! end of the text. A period after a short list of abbreviations ("Mr.",
//! "Dr.") never ends a sentence; this is a known approximation.

pub mod lexicon;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::{Error, Result};

pub use lexicon::LEXICON_VERSION;

/// Marks split out as their own tokens.
pub const SPLIT_PUNCT: [char; 6] = ['.', ',', '?', '!', ':', ';'];

const TERMINALS: [&str; 3] = [".", "?", "!"];

/// Half-open token range `[start, end)`, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn contains_span(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Article,
    Preposition,
    Stopword,
    Verb,
    Noun,
    Punct,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 7] = [
        PosTag::Article,
        PosTag::Preposition,
        PosTag::Stopword,
        PosTag::Verb,
        PosTag::Noun,
        PosTag::Punct,
        PosTag::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PosTag::Article => "ARTICLE",
            PosTag::Preposition => "PREPOSITION",
            PosTag::Stopword => "STOPWORD",
            PosTag::Verb => "VERB",
            PosTag::Noun => "NOUN",
            PosTag::Punct => "PUNCT",
            PosTag::Other => "OTHER",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PosTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown tag {s:?}")))
    }
}

/// A named-entity range with an optional class label (e.g. `GPE`, `PERSON`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub span: Span,
    pub label: Option<String>,
}

/// Where the `pos` labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    /// Tokens and sentences only.
    #[default]
    None,
    /// Built-in word lists: ARTICLE, PREPOSITION, STOPWORD, PUNCT, OTHER.
    Rules,
    /// Merged from an annotation file; VERB / NOUN and entities available.
    External,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedText {
    pub tokens: Vec<String>,
    pub sentence_spans: Vec<Span>,
    pub pos: Option<Vec<PosTag>>,
    pub entities: Option<Vec<Entity>>,
    pub tag_source: TagSource,
}

impl AnnotatedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whether VERB / NOUN labels are available (not merely absent).
    pub fn has_content_tags(&self) -> bool {
        self.tag_source == TagSource::External && self.pos.is_some()
    }

    pub fn tag(&self, i: usize) -> Option<PosTag> {
        self.pos.as_ref().and_then(|p| p.get(i).copied())
    }

    pub fn indices_with(&self, tags: &[PosTag]) -> Vec<usize> {
        match &self.pos {
            Some(pos) => pos
                .iter()
                .enumerate()
                .filter(|(_, t)| tags.contains(t))
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn sentence_of(&self, token: usize) -> Option<usize> {
        self.sentence_spans
            .iter()
            .position(|s| s.start <= token && token < s.end)
    }

    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }

    fn validate_entities(&self, entities: &[Entity]) -> Result<()> {
        let mut sorted: Vec<&Entity> = entities.iter().collect();
        sorted.sort_by_key(|e| e.span);
        let mut last_end = 0;
        for (k, e) in sorted.iter().enumerate() {
            if e.span.is_empty() || e.span.end > self.tokens.len() {
                return Err(Error::invalid(format!(
                    "entity [{}, {}) out of range for {} tokens",
                    e.span.start,
                    e.span.end,
                    self.tokens.len()
                )));
            }
            if k > 0 && e.span.start < last_end {
                return Err(Error::invalid(format!(
                    "overlapping entities at [{}, {})",
                    e.span.start, e.span.end
                )));
            }
            if !self.sentence_spans.iter().any(|s| s.contains_span(&e.span)) {
                return Err(Error::invalid(format!(
                    "entity [{}, {}) crosses a sentence boundary",
                    e.span.start, e.span.end
                )));
            }
            last_end = e.span.end;
        }
        Ok(())
    }
}

struct RawToken {
    text: String,
    end: usize,
}

fn is_closer(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}'))
}

fn starts_capitalized(tok: &str) -> bool {
    tok.chars()
        .find(|c| c.is_alphanumeric())
        .is_some_and(|c| c.is_uppercase())
}

fn split_chunk(chunk: &str, offset: usize, out: &mut Vec<RawToken>) {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut word_start: Option<usize> = None;
    for (k, &(b, c)) in chars.iter().enumerate() {
        let numeric_sep = (c == '.' || c == ',')
            && k > 0
            && chars[k - 1].1.is_ascii_digit()
            && chars.get(k + 1).is_some_and(|(_, n)| n.is_ascii_digit());
        if SPLIT_PUNCT.contains(&c) && !numeric_sep {
            if let Some(s) = word_start.take() {
                out.push(RawToken {
                    text: chunk[s..b].to_string(),
                    end: offset + b,
                });
            }
            out.push(RawToken {
                text: c.to_string(),
                end: offset + b + c.len_utf8(),
            });
        } else if word_start.is_none() {
            word_start = Some(b);
        }
    }
    if let Some(s) = word_start {
        out.push(RawToken {
            text: chunk[s..].to_string(),
            end: offset + chunk.len(),
        });
    }
}

fn raw_tokens(text: &str) -> Vec<RawToken> {
    let mut out = Vec::new();
    let mut chunk_start: Option<usize> = None;
    for (b, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                split_chunk(&text[s..b], s, &mut out);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(b);
        }
    }
    if let Some(s) = chunk_start {
        split_chunk(&text[s..], s, &mut out);
    }
    out
}

/// Token boundaries and sentence spans, plus the byte offset where each
/// sentence ends in `text`.
fn tokenize_with_offsets(text: &str) -> (AnnotatedText, Vec<usize>) {
    let raw = raw_tokens(text);
    let bytes = text.as_bytes();
    let followed_by_space =
        |t: &RawToken| t.end < bytes.len() && text[t.end..].starts_with(char::is_whitespace);

    let mut spans = Vec::new();
    let mut sentence_ends = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < raw.len() {
        if TERMINALS.contains(&raw[i].text.as_str()) {
            let abbreviation = raw[i].text == "."
                && i > 0
                && raw[i - 1].end == raw[i].end - 1
                && lexicon::is_abbreviation(&raw[i - 1].text);
            let mut last = i;
            while last + 1 < raw.len()
                && is_closer(&raw[last + 1].text)
                && !followed_by_space(&raw[last])
            {
                last += 1;
            }
            let at_end = last + 1 == raw.len();
            let boundary = !abbreviation
                && (at_end
                    || (followed_by_space(&raw[last]) && starts_capitalized(&raw[last + 1].text)));
            if boundary {
                spans.push(Span::new(start, last + 1));
                sentence_ends.push(raw[last].end);
                start = last + 1;
                i = last + 1;
                continue;
            }
        }
        i += 1;
    }
    if start < raw.len() {
        spans.push(Span::new(start, raw.len()));
        sentence_ends.push(raw[raw.len() - 1].end);
    }
    let at = AnnotatedText {
        tokens: raw.into_iter().map(|t| t.text).collect(),
        sentence_spans: spans,
        pos: None,
        entities: None,
        tag_source: TagSource::None,
    };
    (at, sentence_ends)
}

/// Tokenize and sentence-split. Never fails; empty or all-whitespace input
/// yields no tokens.
pub fn tokenize(text: &str) -> AnnotatedText {
    tokenize_with_offsets(text).0
}

/// Tokens only.
pub fn tokens(text: &str) -> Vec<String> {
    raw_tokens(text).into_iter().map(|t| t.text).collect()
}

/// Byte offsets in `text` at which each sentence ends, with the token count
/// of every sentence. Used for sentence-aligned truncation.
pub fn sentence_byte_ends(text: &str) -> Vec<(usize, usize)> {
    let (at, ends) = tokenize_with_offsets(text);
    at.sentence_spans
        .iter()
        .zip(ends)
        .map(|(s, e)| (e, s.len()))
        .collect()
}

/// True for sentences that end with a terminal mark (optionally followed by
/// closing quotes), as opposed to fragments cut at the end of the text.
pub fn is_full_sentence(tokens: &[String]) -> bool {
    let mut iter = tokens.iter().rev().skip_while(|t| is_closer(t));
    iter.next().is_some_and(|t| TERMINALS.contains(&t.as_str()))
}

/// Join tokens with single spaces, attaching split punctuation to the
/// preceding token.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        let attach = tok.len() == 1 && tok.chars().all(|c| SPLIT_PUNCT.contains(&c));
        if i > 0 && !attach {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

pub fn is_punct_token(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()))
}

/// Attach built-in ARTICLE / PREPOSITION / STOPWORD / PUNCT labels; every
/// other token is OTHER. Tokens and sentence spans are unchanged.
pub fn annotate_rules(at: AnnotatedText) -> AnnotatedText {
    let pos = at
        .tokens
        .iter()
        .map(|t| {
            if lexicon::is_article(t) {
                PosTag::Article
            } else if lexicon::is_preposition(t) {
                PosTag::Preposition
            } else if lexicon::is_stopword(t) {
                PosTag::Stopword
            } else if is_punct_token(t) {
                PosTag::Punct
            } else {
                PosTag::Other
            }
        })
        .collect();
    AnnotatedText {
        pos: Some(pos),
        tag_source: TagSource::Rules,
        ..at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum EntityRepr {
    Pair(usize, usize),
    Labeled(usize, usize, String),
}

/// One line of an annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    #[serde(default)]
    entities: Vec<EntityRepr>,
}

impl AnnotationRecord {
    pub fn from_annotated(id: &str, at: &AnnotatedText) -> Self {
        let pos = match &at.pos {
            Some(p) => p.iter().map(|t| t.as_str().to_string()).collect(),
            None => vec![PosTag::Other.as_str().to_string(); at.tokens.len()],
        };
        let entities = at
            .entities
            .iter()
            .flatten()
            .map(|e| match &e.label {
                Some(l) => EntityRepr::Labeled(e.span.start, e.span.end, l.clone()),
                None => EntityRepr::Pair(e.span.start, e.span.end),
            })
            .collect();
        AnnotationRecord {
            id: id.to_string(),
            tokens: at.tokens.clone(),
            pos,
            entities,
        }
    }

    pub fn entities(&self) -> Vec<Entity> {
        self.entities
            .iter()
            .map(|e| match e {
                EntityRepr::Pair(s, t) => Entity {
                    span: Span::new(*s, *t),
                    label: None,
                },
                EntityRepr::Labeled(s, t, l) => Entity {
                    span: Span::new(*s, *t),
                    label: Some(l.clone()),
                },
            })
            .collect()
    }
}

/// Overlay one annotation record onto `at`. File labels win over rule
/// labels; the record must have exactly one tag per token.
pub fn merge_annotation(at: AnnotatedText, rec: &AnnotationRecord) -> Result<AnnotatedText> {
    let mismatch = |what: &str, got: usize| {
        Error::invalid(format!(
            "annotation for sample {:?}: {got} {what} for {} tokens",
            rec.id,
            at.tokens.len()
        ))
    };
    if rec.tokens.len() != at.tokens.len() {
        return Err(mismatch("tokens", rec.tokens.len()));
    }
    if rec.pos.len() != at.tokens.len() {
        return Err(mismatch("tags", rec.pos.len()));
    }
    if rec.tokens != at.tokens {
        log::warn!("annotation for sample {:?}: token strings differ from the tokenizer", rec.id);
    }
    let pos = rec
        .pos
        .iter()
        .map(|s| {
            s.parse::<PosTag>()
                .map_err(|_| Error::invalid(format!("annotation for sample {:?}: unknown tag {s:?}", rec.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let entities = rec.entities();
    at.validate_entities(&entities)
        .map_err(|e| Error::invalid(format!("annotation for sample {:?}: {e}", rec.id)))?;
    let mut entities = entities;
    entities.sort_by_key(|e| e.span);
    Ok(AnnotatedText {
        pos: Some(pos),
        entities: Some(entities),
        tag_source: TagSource::External,
        ..at
    })
}

/// Read an annotation file; a leading provenance header line is skipped.
pub fn load_annotation_file(path: &Path) -> Result<BTreeMap<String, AnnotationRecord>> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = BTreeMap::new();
    for (n, line) in body.lines().enumerate() {
        if line.trim().is_empty() || (n == 0 && line.starts_with("{\"provenance\"")) {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if out.contains_key(&rec.id) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("duplicate id {:?}", rec.id),
            });
        }
        out.insert(rec.id.clone(), rec);
    }
    Ok(out)
}

/// How a corpus gets annotated.
#[derive(Debug, Clone, Default)]
pub enum AnnotationSource {
    /// Tokens and sentences only.
    None,
    /// Built-in word lists.
    #[default]
    Rules,
    /// Rules, overlaid with records from a file. Samples without a record
    /// keep their rule labels.
    Merge(BTreeMap<String, AnnotationRecord>),
}

/// Annotate every gold hypothesis in the corpus, keyed by sample id.
pub fn annotate_corpus(
    corpus: &Corpus,
    source: &AnnotationSource,
) -> Result<BTreeMap<String, AnnotatedText>> {
    let mut out = BTreeMap::new();
    for s in &corpus.samples {
        let base = tokenize(&s.gold);
        let at = match source {
            AnnotationSource::None => base,
            AnnotationSource::Rules => annotate_rules(base),
            AnnotationSource::Merge(records) => {
                let ruled = annotate_rules(base);
                match records.get(&s.id) {
                    Some(rec) => merge_annotation(ruled, rec)?,
                    None => ruled,
                }
            }
        };
        out.insert(s.id.clone(), at);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text).tokens
    }

    #[test]
    fn tokenize_simple_sentence() {
        let at = tokenize("She went to work.");
        assert_eq!(at.tokens, ["She", "went", "to", "work", "."]);
        assert_eq!(at.sentence_spans, vec![Span::new(0, 5)]);
    }

    #[test]
    fn two_short_sentences() {
        let at = tokenize("A. B?");
        assert_eq!(at.sentence_spans, vec![Span::new(0, 2), Span::new(2, 4)]);
    }

    #[test]
    fn punctuation_is_isolated() {
        assert_eq!(toks("a,b"), ["a", ",", "b"]);
        assert_eq!(toks("wait;what?!"), ["wait", ";", "what", "?", "!"]);
    }

    #[test]
    fn numbers_keep_inner_separators() {
        assert_eq!(toks("a 3.5% rise of 1,000."), ["a", "3.5%", "rise", "of", "1,000", "."]);
    }

    #[test]
    fn lowercase_after_period_is_not_a_boundary() {
        let at = tokenize("It rose 3. then fell.");
        assert_eq!(at.sentence_spans.len(), 1);
    }

    #[test]
    fn abbreviations_do_not_split() {
        let at = tokenize("Mr. Smith arrived. He sat.");
        assert_eq!(at.sentence_spans, vec![Span::new(0, 5), Span::new(5, 8)]);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let at = tokenize("He said \"stop.\" Then left.");
        assert_eq!(at.tokens[4], "\"");
        assert_eq!(at.sentence_spans[0], Span::new(0, 5));
    }

    #[test]
    fn trailing_fragment_is_a_sentence() {
        let at = tokenize("One. two three");
        assert_eq!(at.sentence_spans, vec![Span::new(0, 4)]);
        let at = tokenize("One. Two three");
        assert_eq!(at.sentence_spans, vec![Span::new(0, 2), Span::new(2, 4)]);
        assert!(!is_full_sentence(&at.tokens[2..]));
    }

    #[test]
    fn detokenize_attaches_punctuation() {
        assert_eq!(detokenize(&toks("She  went ,to the office .")), "She went, to the office.");
    }

    #[test]
    fn rules_tag_articles_and_prepositions() {
        let at = annotate_rules(tokenize("She went to the office"));
        let pos = at.pos.unwrap();
        assert_eq!(pos[3], PosTag::Article);
        assert_eq!(pos[2], PosTag::Preposition);
        assert_eq!(pos[0], PosTag::Stopword);
        assert_eq!(pos[4], PosTag::Other);
    }

    #[test]
    fn rules_are_case_insensitive() {
        let at = annotate_rules(tokenize("An apple"));
        assert_eq!(at.pos.unwrap()[0], PosTag::Article);
    }

    #[test]
    fn all_punctuation_has_no_content_tags() {
        let at = annotate_rules(tokenize("... ?! ;"));
        assert!(at.pos.unwrap().iter().all(|t| *t == PosTag::Punct));
    }

    #[test]
    fn rules_keep_tokens_and_spans() {
        let base = tokenize("Dr. Who went home. It rained!");
        let tagged = annotate_rules(base.clone());
        assert_eq!(tagged.tokens, base.tokens);
        assert_eq!(tagged.sentence_spans, base.sentence_spans);
        assert!(!tagged.has_content_tags());
    }

    fn record(json: &str) -> AnnotationRecord {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn merge_overlays_verbs_and_entities() {
        let at = annotate_rules(tokenize("She went to Boston ."));
        let rec = record(
            r#"{"id":"s1","tokens":["She","went","to","Boston","."],
                "pos":["STOPWORD","VERB","PREPOSITION","NOUN","PUNCT"],
                "entities":[[3,4,"GPE"]]}"#,
        );
        let merged = merge_annotation(at, &rec).unwrap();
        assert_eq!(merged.tag(1), Some(PosTag::Verb));
        assert!(merged.has_content_tags());
        let ents = merged.entities.unwrap();
        assert_eq!(ents[0].span, Span::new(3, 4));
        assert_eq!(ents[0].label.as_deref(), Some("GPE"));
    }

    #[test]
    fn merge_accepts_unlabeled_pairs() {
        let at = tokenize("in the Boston area");
        let rec = record(
            r#"{"id":"x","tokens":["in","the","Boston","area"],
                "pos":["OTHER","OTHER","NOUN","NOUN"],"entities":[[2,3]]}"#,
        );
        let merged = merge_annotation(at, &rec).unwrap();
        assert_eq!(merged.entities.unwrap()[0].span, Span::new(2, 3));
    }

    #[test]
    fn merge_rejects_tag_count_mismatch() {
        let at = tokenize("She went to the office");
        let rec = record(
            r#"{"id":"s9","tokens":["She","went","to","the","office"],
                "pos":["OTHER","VERB","OTHER","OTHER"]}"#,
        );
        let err = merge_annotation(at, &rec).unwrap_err().to_string();
        assert!(err.contains("s9"), "{err}");
    }

    #[test]
    fn merge_rejects_unknown_tags_and_overlaps() {
        let at = tokenize("a b c");
        let bad_tag = record(r#"{"id":"t","tokens":["a","b","c"],"pos":["X","OTHER","OTHER"]}"#);
        assert!(merge_annotation(at.clone(), &bad_tag).is_err());
        let overlap = record(
            r#"{"id":"t","tokens":["a","b","c"],"pos":["OTHER","OTHER","OTHER"],"entities":[[0,2],[1,3]]}"#,
        );
        assert!(merge_annotation(at.clone(), &overlap).is_err());
        let crossing = tokenize("A b. C d.");
        let rec = record(
            r#"{"id":"t","tokens":["A","b",".","C","d","."],"pos":["OTHER","OTHER","PUNCT","OTHER","OTHER","PUNCT"],"entities":[[1,4]]}"#,
        );
        assert!(merge_annotation(crossing, &rec).is_err());
    }

    #[test]
    fn record_round_trips_through_json() {
        let at = annotate_rules(tokenize("She went to the office."));
        let rec = AnnotationRecord::from_annotated("s1", &at);
        let line = serde_json::to_string(&rec).unwrap();
        let back: AnnotationRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }
}

//! Synthetic noise applied to gold hypotheses.
//!
//! Every operation maps `(sample, annotations, spec)` to a
//! [`NoisedHypothesis`] and is a pure function of its inputs: randomness
//! comes only from `spec.seed`. A "portion p" of `m` eligible targets means
//! `ceil(p * m)` targets drawn uniformly without replacement; draws come
//! from a seeded shuffle, so a higher portion always selects a superset of
//! a lower one. When no target is eligible the result is marked `skipped`
//! and the text is the gold hypothesis, byte for byte.
//!
//! Each result carries an edit log. Replaying it against the gold
//! hypothesis with [`replay`] reproduces the noised text exactly.

mod lexical;
pub mod lemma;
pub mod ngram;
mod structural;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::annotate::{self, AnnotatedText, Span};
use crate::corpus::{Corpus, Sample};
use crate::seed::{rng_from_seed, StressRng};
use crate::{Error, Result};

pub use ngram::{collect_ngrams, collect_ngrams_from, NgramCount, NgramTable};
pub use synthetic::{injection_template, INJECTION_TEMPLATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Truncation,
    ArticleRemoval,
    PrepositionRemoval,
    StopwordRemoval,
    VerbLemmatization,
    TokenDrop,
    RepeatedToken,
    LocalSwap,
    MiddleSwap,
    NoisedPunctuation,
    SentenceSwitch,
    SentenceReplace,
    Negation,
    GenericEntity,
    EntitySwitch,
    VerbSwitch,
    NounSwitch,
    PositionedError,
    RepK,
    FreqNgram,
    CopySource,
    Injection,
    BertDiverge,
}

/// What the `level` of a spec means for a kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelDomain {
    /// Portion strictly between 0 and 1.
    OpenFraction,
    /// Portion in (0, 1].
    Fraction,
    /// Non-negative integer count (pairs, sentences, copies).
    Count,
    /// The level is not used.
    Unused,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 23] = [
        NoiseKind::Truncation,
        NoiseKind::ArticleRemoval,
        NoiseKind::PrepositionRemoval,
        NoiseKind::StopwordRemoval,
        NoiseKind::VerbLemmatization,
        NoiseKind::TokenDrop,
        NoiseKind::RepeatedToken,
        NoiseKind::LocalSwap,
        NoiseKind::MiddleSwap,
        NoiseKind::NoisedPunctuation,
        NoiseKind::SentenceSwitch,
        NoiseKind::SentenceReplace,
        NoiseKind::Negation,
        NoiseKind::GenericEntity,
        NoiseKind::EntitySwitch,
        NoiseKind::VerbSwitch,
        NoiseKind::NounSwitch,
        NoiseKind::PositionedError,
        NoiseKind::RepK,
        NoiseKind::FreqNgram,
        NoiseKind::CopySource,
        NoiseKind::Injection,
        NoiseKind::BertDiverge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::Truncation => "truncation",
            NoiseKind::ArticleRemoval => "article_removal",
            NoiseKind::PrepositionRemoval => "preposition_removal",
            NoiseKind::StopwordRemoval => "stopword_removal",
            NoiseKind::VerbLemmatization => "verb_lemmatization",
            NoiseKind::TokenDrop => "token_drop",
            NoiseKind::RepeatedToken => "repeated_token",
            NoiseKind::LocalSwap => "local_swap",
            NoiseKind::MiddleSwap => "middle_swap",
            NoiseKind::NoisedPunctuation => "noised_punctuation",
            NoiseKind::SentenceSwitch => "sentence_switch",
            NoiseKind::SentenceReplace => "sentence_replace",
            NoiseKind::Negation => "negation",
            NoiseKind::GenericEntity => "generic_entity",
            NoiseKind::EntitySwitch => "entity_switch",
            NoiseKind::VerbSwitch => "verb_switch",
            NoiseKind::NounSwitch => "noun_switch",
            NoiseKind::PositionedError => "positioned_error",
            NoiseKind::RepK => "rep_k",
            NoiseKind::FreqNgram => "freq_ngram",
            NoiseKind::CopySource => "copy_source",
            NoiseKind::Injection => "injection",
            NoiseKind::BertDiverge => "bert_diverge",
        }
    }

    pub fn level_domain(&self) -> LevelDomain {
        use NoiseKind::*;
        match self {
            Truncation => LevelDomain::OpenFraction,
            ArticleRemoval | PrepositionRemoval | StopwordRemoval | VerbLemmatization
            | TokenDrop | RepeatedToken | LocalSwap | MiddleSwap | NoisedPunctuation
            | Negation | GenericEntity | BertDiverge => LevelDomain::Fraction,
            SentenceSwitch | SentenceReplace | EntitySwitch | VerbSwitch | NounSwitch | RepK => {
                LevelDomain::Count
            }
            PositionedError | FreqNgram | CopySource | Injection => LevelDomain::Unused,
        }
    }

    pub fn check_level(&self, level: f64) -> Result<()> {
        let ok = match self.level_domain() {
            LevelDomain::OpenFraction => level > 0.0 && level < 1.0,
            LevelDomain::Fraction => level > 0.0 && level <= 1.0,
            LevelDomain::Count => level >= 0.0 && level.fract() == 0.0 && level.is_finite(),
            LevelDomain::Unused => level.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            let domain = match self.level_domain() {
                LevelDomain::OpenFraction => "(0, 1)",
                LevelDomain::Fraction => "(0, 1]",
                LevelDomain::Count => "a non-negative integer",
                LevelDomain::Unused => "finite",
            };
            Err(Error::noise(self, format!("level {level} must be {domain}")))
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        NoiseKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanPosition {
    Start,
    Middle,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    Random,
    Shuffle,
}

/// Kind-specific options. Unset fields take the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseOptions {
    /// positioned_error: where the span sits (default `end`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<SpanPosition>,
    /// positioned_error: random tokens or an in-place shuffle (default `random`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ErrorMode>,
    /// positioned_error: span length (default 10).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_len: Option<usize>,
    /// freq_ngram: n-gram order (default 4).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// freq_ngram: pool size (default 50).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// freq_ngram: minimum synthesized length in tokens (default 256).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_len: Option<usize>,
    /// sentence_switch: keep the final sentence in place.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub fix_last_sentence: bool,
    /// injection: template id (default `inj-1`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    /// injection: append a random summary from another sample.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub with_random_summary: bool,
}

impl NoiseOptions {
    /// Parse `key=value` pairs as given on the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::invalid(format!("bad value {value:?} for option {key}"));
        let parse_usize = || value.parse::<usize>().map_err(|_| bad());
        let parse_bool = || value.parse::<bool>().map_err(|_| bad());
        match key {
            "position" => {
                self.position = Some(serde_json::from_value(serde_json::json!(value)).map_err(|_| bad())?)
            }
            "mode" => self.mode = Some(serde_json::from_value(serde_json::json!(value)).map_err(|_| bad())?),
            "span_len" => self.span_len = Some(parse_usize()?),
            "n" => self.n = Some(parse_usize()?),
            "top_k" => self.top_k = Some(parse_usize()?),
            "target_len" => self.target_len = Some(parse_usize()?),
            "fix_last_sentence" => self.fix_last_sentence = parse_bool()?,
            "template" => self.template = Some(value.to_string()),
            "with_random_summary" => self.with_random_summary = parse_bool()?,
            other => return Err(Error::invalid(format!("unknown noise option {other:?}"))),
        }
        Ok(())
    }
}

/// A noise kind, its level and seed: fully determines a perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub options: NoiseOptions,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: f64, seed: u64) -> Self {
        NoiseSpec {
            kind,
            level,
            seed,
            options: NoiseOptions::default(),
        }
    }

    pub fn with_options(mut self, options: NoiseOptions) -> Self {
        self.options = options;
        self
    }

    fn count(&self) -> usize {
        self.level as usize
    }
}

/// One step of an edit log. Positions refer to the token sequence as it
/// stands when the step is applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    Delete { pos: usize },
    Insert { pos: usize, token: String },
    Replace { pos: usize, token: String },
    ReplaceSpan { span: Span, tokens: Vec<String> },
    /// Exchange two disjoint spans, `first` before `second`.
    SwapSpans { first: Span, second: Span },
    /// Replace the whole text verbatim.
    SetText { text: String },
    /// No-op record of a target that could not be edited.
    Note {
        #[serde(skip_serializing_if = "Option::is_none")]
        pos: Option<usize>,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisedHypothesis {
    pub sample_id: String,
    pub text: String,
    pub spec: NoiseSpec,
    pub edits: Vec<Edit>,
    pub skipped: bool,
}

impl NoisedHypothesis {
    /// Number of edits that change tokens (notes excluded).
    pub fn edit_count(&self) -> usize {
        self.edits
            .iter()
            .filter(|e| !matches!(e, Edit::Note { .. }))
            .count()
    }
}

/// Supplies substitution candidates for a token in context.
pub trait CandidateProvider: Send + Sync {
    fn candidates(&self, tokens: &[String], position: usize) -> Result<Vec<String>>;
}

/// Sentences of every gold hypothesis, for sentence replacement.
#[derive(Debug, Clone, Default)]
pub struct DonorPool {
    entries: Vec<(String, Vec<String>)>,
}

impl DonorPool {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut entries = Vec::new();
        for s in &corpus.samples {
            let at = annotate::tokenize(&s.gold);
            for span in &at.sentence_spans {
                entries.push((s.id.clone(), at.tokens[span.range()].to_vec()));
            }
        }
        DonorPool { entries }
    }

    /// Sentences not taken from `sample_id`.
    pub fn foreign<'a>(&'a self, sample_id: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        self.entries
            .iter()
            .filter(move |(id, _)| id != sample_id)
            .map(|(_, s)| s)
    }
}

/// Shared inputs some noise kinds need beyond the sample itself.
#[derive(Clone, Copy, Default)]
pub struct PerturbContext<'a> {
    /// Corpus for "random irrelevant" material (sentence replacement,
    /// injection with a random summary).
    pub donor: Option<&'a Corpus>,
    pub donor_pool: Option<&'a DonorPool>,
    /// Token pool for positioned errors in random mode.
    pub vocab: Option<&'a [String]>,
    pub ngrams: Option<&'a NgramTable>,
    pub candidates: Option<&'a dyn CandidateProvider>,
}

impl fmt::Debug for PerturbContext<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbContext")
            .field("donor", &self.donor.map(|c| c.len()))
            .field("vocab", &self.vocab.map(|v| v.len()))
            .field("ngrams", &self.ngrams.map(|t| t.len()))
            .field("candidates", &self.candidates.is_some())
            .finish()
    }
}

/// Token sequence under construction, logging every step.
pub(crate) struct Draft {
    tokens: Vec<String>,
    edits: Vec<Edit>,
    /// Verbatim text and its tokens; used when the tokens end up unchanged.
    verbatim: (String, Vec<String>),
}

impl Draft {
    pub(crate) fn new(gold: &str) -> Self {
        let tokens = annotate::tokens(gold);
        Draft {
            verbatim: (gold.to_string(), tokens.clone()),
            tokens,
            edits: Vec::new(),
        }
    }

    pub(crate) fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub(crate) fn apply(&mut self, edit: Edit) {
        apply_edit(&mut self.tokens, &mut self.verbatim, &edit);
        self.edits.push(edit);
    }

    pub(crate) fn delete(&mut self, pos: usize) {
        self.apply(Edit::Delete { pos });
    }

    pub(crate) fn insert(&mut self, pos: usize, token: impl Into<String>) {
        self.apply(Edit::Insert {
            pos,
            token: token.into(),
        });
    }

    pub(crate) fn replace(&mut self, pos: usize, token: impl Into<String>) {
        self.apply(Edit::Replace {
            pos,
            token: token.into(),
        });
    }

    pub(crate) fn note(&mut self, pos: Option<usize>, message: impl Into<String>) {
        self.apply(Edit::Note {
            pos,
            message: message.into(),
        });
    }

    pub(crate) fn has_changes(&self) -> bool {
        self.edits.iter().any(|e| !matches!(e, Edit::Note { .. }))
    }

    pub(crate) fn finish(self, sample: &Sample, spec: &NoiseSpec, skipped: bool) -> NoisedHypothesis {
        let text = if skipped {
            sample.gold.clone()
        } else {
            render(&self.tokens, &self.verbatim)
        };
        NoisedHypothesis {
            sample_id: sample.id.clone(),
            text,
            spec: spec.clone(),
            edits: self.edits,
            skipped,
        }
    }
}

fn render(tokens: &[String], verbatim: &(String, Vec<String>)) -> String {
    if tokens == verbatim.1.as_slice() {
        verbatim.0.clone()
    } else {
        annotate::detokenize(tokens)
    }
}

fn apply_edit(tokens: &mut Vec<String>, verbatim: &mut (String, Vec<String>), edit: &Edit) {
    match edit {
        Edit::Delete { pos } => {
            tokens.remove(*pos);
        }
        Edit::Insert { pos, token } => tokens.insert(*pos, token.clone()),
        Edit::Replace { pos, token } => tokens[*pos] = token.clone(),
        Edit::ReplaceSpan { span, tokens: new } => {
            tokens.splice(span.range(), new.iter().cloned());
        }
        Edit::SwapSpans { first, second } => {
            let a = tokens[first.range()].to_vec();
            let b = tokens[second.range()].to_vec();
            // replace the later span first so `first` stays valid
            tokens.splice(second.range(), a);
            tokens.splice(first.range(), b);
        }
        Edit::SetText { text } => {
            *tokens = annotate::tokens(text);
            *verbatim = (text.clone(), tokens.clone());
        }
        Edit::Note { .. } => {}
    }
}

/// Rebuild the noised text from the gold hypothesis and an edit log.
pub fn replay(gold: &str, edits: &[Edit], skipped: bool) -> Result<String> {
    if skipped {
        return Ok(gold.to_string());
    }
    let mut tokens = annotate::tokens(gold);
    let mut verbatim = (gold.to_string(), tokens.clone());
    for edit in edits {
        check_edit(&tokens, edit)?;
        apply_edit(&mut tokens, &mut verbatim, edit);
    }
    Ok(render(&tokens, &verbatim))
}

fn check_edit(tokens: &[String], edit: &Edit) -> Result<()> {
    let n = tokens.len();
    let ok = match edit {
        Edit::Delete { pos } | Edit::Replace { pos, .. } => *pos < n,
        Edit::Insert { pos, .. } => *pos <= n,
        Edit::ReplaceSpan { span, .. } => span.start <= span.end && span.end <= n,
        Edit::SwapSpans { first, second } => {
            first.start <= first.end && first.end <= second.start && second.start <= second.end && second.end <= n
        }
        Edit::SetText { .. } | Edit::Note { .. } => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("edit {edit:?} out of range for {n} tokens")))
    }
}

/// `ceil(p * m)`, tolerant of float noise in `p * m`.
pub fn portion_count(p: f64, m: usize) -> usize {
    if p <= 0.0 || m == 0 {
        return 0;
    }
    let raw = p * m as f64;
    (((raw - 1e-9).ceil()).max(1.0) as usize).min(m)
}

/// Seeded shuffle of `eligible`; the first `k` entries are the selection
/// for any `k`, so larger portions select supersets.
pub(crate) fn shuffled(rng: &mut StressRng, eligible: &[usize]) -> Vec<usize> {
    let mut order = eligible.to_vec();
    order.shuffle(rng);
    order
}

pub(crate) fn select_portion(rng: &mut StressRng, eligible: &[usize], p: f64) -> Vec<usize> {
    let k = portion_count(p, eligible.len());
    let mut picked: Vec<usize> = shuffled(rng, eligible).into_iter().take(k).collect();
    picked.sort_unstable();
    picked
}

/// Swap the contents of slots `i < j` of the sorted, non-overlapping
/// `spans`, updating every slot to its new position. Returns the edit.
pub(crate) fn swap_tracked(spans: &mut [Span], i: usize, j: usize) -> Edit {
    let (a, b) = (spans[i], spans[j]);
    let delta = b.len() as isize - a.len() as isize;
    let shift = |x: usize| (x as isize + delta) as usize;
    for s in &mut spans[i + 1..j] {
        *s = Span::new(shift(s.start), shift(s.end));
    }
    spans[i] = Span::new(a.start, a.start + b.len());
    spans[j] = Span::new(shift(b.start), b.end);
    Edit::SwapSpans { first: a, second: b }
}

/// Apply `spec` to a sample.
pub fn perturb(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    ctx: &PerturbContext<'_>,
) -> Result<NoisedHypothesis> {
    spec.kind.check_level(spec.level)?;
    if at.is_empty() {
        return Err(Error::noise(spec.kind, format!("sample {:?} has no tokens", sample.id)));
    }
    let mut rng = rng_from_seed(spec.seed);
    let rng = &mut rng;
    use NoiseKind::*;
    match spec.kind {
        Truncation => lexical::truncation(sample, at, spec),
        ArticleRemoval | PrepositionRemoval | StopwordRemoval | TokenDrop => {
            lexical::drop_tokens(sample, at, spec, rng)
        }
        VerbLemmatization => lexical::verb_lemmatization(sample, at, spec, rng),
        RepeatedToken => lexical::repeated_token(sample, at, spec, rng),
        LocalSwap => lexical::local_swap(sample, at, spec, rng),
        NoisedPunctuation => lexical::noised_punctuation(sample, at, spec, rng),
        MiddleSwap => structural::middle_swap(sample, at, spec, rng),
        SentenceSwitch => structural::sentence_switch(sample, at, spec, rng),
        SentenceReplace => structural::sentence_replace(sample, at, spec, ctx, rng),
        Negation => structural::negation(sample, at, spec, rng),
        GenericEntity | EntitySwitch | VerbSwitch | NounSwitch => {
            structural::entity_ops(sample, at, spec, rng)
        }
        PositionedError => synthetic::positioned_error(sample, at, spec, ctx, rng),
        RepK => synthetic::rep_k(sample, at, spec),
        FreqNgram => synthetic::freq_ngram_synth(sample, spec, ctx, rng),
        CopySource => synthetic::copy_source(sample, spec),
        Injection => synthetic::injection(sample, spec, ctx, rng),
        BertDiverge => synthetic::bert_diverge(sample, at, spec, ctx, rng),
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn portion_rounding() {
        assert_eq!(portion_count(0.3, 10), 3);
        assert_eq!(portion_count(0.1, 10), 1);
        assert_eq!(portion_count(0.5, 5), 3);
        assert_eq!(portion_count(0.01, 5), 1);
        assert_eq!(portion_count(1.0, 5), 5);
        assert_eq!(portion_count(0.7, 10), 7);
        assert_eq!(portion_count(0.0, 10), 0);
    }

    #[test]
    fn level_domains() {
        assert!(NoiseKind::Truncation.check_level(1.0).is_err());
        assert!(NoiseKind::Truncation.check_level(0.0).is_err());
        assert!(NoiseKind::TokenDrop.check_level(1.0).is_ok());
        assert!(NoiseKind::SentenceSwitch.check_level(1.5).is_err());
        assert!(NoiseKind::RepK.check_level(0.0).is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in NoiseKind::ALL {
            assert_eq!(k.as_str().parse::<NoiseKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
        assert_eq!("rep-k".parse::<NoiseKind>().unwrap(), NoiseKind::RepK);
    }

    #[test]
    fn options_from_pairs() {
        let mut o = NoiseOptions::default();
        o.set("position", "middle").unwrap();
        o.set("mode", "shuffle").unwrap();
        o.set("fix_last_sentence", "true").unwrap();
        assert_eq!(o.position, Some(SpanPosition::Middle));
        assert_eq!(o.mode, Some(ErrorMode::Shuffle));
        assert!(o.fix_last_sentence);
        assert!(o.set("position", "top").is_err());
        assert!(o.set("colour", "red").is_err());
    }

    #[test]
    fn swap_tracking_moves_spans() {
        // [0,2) [2,5) [5,6): swap first and last
        let mut spans = vec![Span::new(0, 2), Span::new(2, 5), Span::new(5, 6)];
        let mut toks: Vec<String> = "a b c d e f".split(' ').map(String::from).collect();
        let edit = swap_tracked(&mut spans, 0, 2);
        let mut v = (String::new(), vec![]);
        apply_edit(&mut toks, &mut v, &edit);
        assert_eq!(toks.join(" "), "f c d e a b");
        assert_eq!(spans, vec![Span::new(0, 1), Span::new(1, 4), Span::new(4, 6)]);
    }

    #[test]
    fn replay_rejects_out_of_range_edits() {
        assert!(replay("a b", &[Edit::Delete { pos: 5 }], false).is_err());
    }

    fn gold_text() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            Just("the"), Just("a"), Just("to"), Just("in"), Just("she"), Just("went"),
            Just("office"), Just("Boston"), Just("walked"), Just("is"), Just("cat"),
            Just("."), Just(","), Just("?"), Just("They"), Just("And"),
        ];
        proptest::collection::vec(word, 1..40).prop_map(|w| {
            let mut s = w.join(" ");
            s.push_str(" end.");
            s
        })
    }

    const RULE_KINDS: [(NoiseKind, f64); 12] = [
        (NoiseKind::Truncation, 0.3),
        (NoiseKind::ArticleRemoval, 0.5),
        (NoiseKind::PrepositionRemoval, 0.5),
        (NoiseKind::StopwordRemoval, 0.5),
        (NoiseKind::TokenDrop, 0.4),
        (NoiseKind::RepeatedToken, 0.3),
        (NoiseKind::LocalSwap, 0.3),
        (NoiseKind::MiddleSwap, 1.0),
        (NoiseKind::NoisedPunctuation, 0.5),
        (NoiseKind::SentenceSwitch, 2.0),
        (NoiseKind::Negation, 1.0),
        (NoiseKind::RepK, 3.0),
    ];

    proptest! {
        #[test]
        fn deterministic_and_replayable(gold in gold_text(), seed in any::<u64>()) {
            let at = ruled(&gold);
            let s = sample(&gold);
            for (kind, level) in RULE_KINDS {
                let spec = NoiseSpec::new(kind, level, seed);
                let a = perturb(&s, &at, &spec, &PerturbContext::default()).unwrap();
                let b = perturb(&s, &at, &spec, &PerturbContext::default()).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(replay(&gold, &a.edits, a.skipped).unwrap(), a.text.clone());
                if a.skipped {
                    prop_assert_eq!(&a.text, &gold);
                }
                // the edit log survives serialization
                let json = serde_json::to_string(&a).unwrap();
                let back: NoisedHypothesis = serde_json::from_str(&json).unwrap();
                prop_assert_eq!(back, a);
            }
        }

        #[test]
        fn edit_count_is_monotone_in_level(gold in gold_text(), seed in any::<u64>(), p1 in 0.01f64..0.99, p2 in 0.01f64..0.99) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let at = ruled(&gold);
            for kind in [NoiseKind::Truncation, NoiseKind::TokenDrop, NoiseKind::StopwordRemoval,
                         NoiseKind::ArticleRemoval, NoiseKind::RepeatedToken] {
                let a = run(&gold, &at, NoiseSpec::new(kind, lo, seed));
                let b = run(&gold, &at, NoiseSpec::new(kind, hi, seed));
                prop_assert!(a.edit_count() <= b.edit_count(), "{kind}: {lo} -> {}, {hi} -> {}", a.edit_count(), b.edit_count());
            }
        }
    }
}

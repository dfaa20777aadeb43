//! Built-in metrics that need no pretrained model.
//!
//! All built-ins are sample-scope and higher-is-better; the repetition
//! metric is registered negated (`rep4` scores `-rep_ngram(h, 4)`). Text is
//! tokenized with [`crate::annotate::tokens`] and compared case-sensitively.
//! With several references, BLEU clips against the per-n-gram maximum over
//! references; ROUGE and token overlap take the best reference.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotate;
use crate::perturb::NoiseKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Sample,
    Set,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Needs {
    #[serde(default)]
    pub source: bool,
    #[serde(default)]
    pub references: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub name: String,
    pub higher_is_better: bool,
    pub scope: Scope,
    pub needs: Needs,
    /// Receives every reference; otherwise only the first.
    pub multi_reference: bool,
}

/// A sample-level metric.
pub trait Metric: Send + Sync {
    fn descriptor(&self) -> &MetricDescriptor;

    fn score(&self, hypothesis: &str, source: Option<&str>, references: &[String]) -> Result<f64>;
}

const BLEU_EPSILON: f64 = 0.1;

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngram_counts(tokens: &[String], n: usize) -> Counts<'_> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn overlap(a: &Counts<'_>, b: &Counts<'_>) -> usize {
    a.iter()
        .map(|(g, &c)| c.min(b.get(g).copied().unwrap_or(0)))
        .sum()
}

fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn tok(text: &str) -> Vec<String> {
    annotate::tokens(text)
}

/// Clipped n-gram matches and total hypothesis n-grams.
pub fn clipped_precision(hyp: &[String], refs: &[Vec<String>], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let ref_counts: Vec<Counts<'_>> = refs.iter().map(|r| ngram_counts(r, n)).collect();
    let matches = h
        .iter()
        .map(|(g, &c)| {
            let max_ref = ref_counts
                .iter()
                .map(|rc| rc.get(g).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            c.min(max_ref)
        })
        .sum();
    (matches, hyp.len().saturating_sub(n - 1))
}

/// Sentence BLEU with brevity penalty. Orders above the hypothesis length
/// are dropped; a zero match count is floored to 0.1.
pub fn bleu_tokens(hyp: &[String], refs: &[Vec<String>], max_n: usize) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::invalid("bleu needs at least one reference"));
    }
    if hyp.is_empty() || max_n == 0 {
        return Ok(0.0);
    }
    let order = max_n.min(hyp.len());
    let mut log_sum = 0.0;
    for n in 1..=order {
        let (m, total) = clipped_precision(hyp, refs, n);
        let p = if m == 0 {
            BLEU_EPSILON / total as f64
        } else {
            m as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let c = hyp.len();
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * (log_sum / order as f64).exp())
}

pub fn bleu(hyp: &str, refs: &[String], max_n: usize) -> Result<f64> {
    let refs: Vec<Vec<String>> = refs.iter().map(|r| tok(r)).collect();
    bleu_tokens(&tok(hyp), &refs, max_n)
}

fn rouge_n_single(hyp: &[String], reference: &[String], n: usize) -> f64 {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let h_total: usize = h.values().sum();
    let r_total: usize = r.values().sum();
    if h_total == 0 || r_total == 0 {
        // too short for any n-gram: exact match or nothing
        return if !hyp.is_empty() && hyp == reference { 1.0 } else { 0.0 };
    }
    let m = overlap(&h, &r) as f64;
    f_measure(m / h_total as f64, m / r_total as f64)
}

/// ROUGE-N f-measure, best over references.
pub fn rouge_n(hyp: &str, refs: &[String], n: usize) -> f64 {
    let h = tok(hyp);
    refs.iter()
        .map(|r| rouge_n_single(&h, &tok(r), n))
        .fold(0.0, f64::max)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_l_single(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(hyp, reference) as f64;
    f_measure(l / hyp.len() as f64, l / reference.len() as f64)
}

/// ROUGE-L f-measure, best over references.
pub fn rouge_l(hyp: &str, refs: &[String]) -> f64 {
    let h = tok(hyp);
    refs.iter()
        .map(|r| rouge_l_single(&h, &tok(r)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapVariant {
    P,
    R,
    F,
}

/// Precision, recall and F of one-to-one token matching.
pub fn overlap_scores(hyp: &[String], reference: &[String]) -> (f64, f64, f64) {
    if hyp.is_empty() || reference.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let m = overlap(&ngram_counts(hyp, 1), &ngram_counts(reference, 1)) as f64;
    let p = m / hyp.len() as f64;
    let r = m / reference.len() as f64;
    (p, r, f_measure(p, r))
}

pub fn overlap_prf(hyp: &str, refs: &[String], variant: OverlapVariant) -> f64 {
    let h = tok(hyp);
    refs.iter()
        .map(|r| {
            let (p, rc, f) = overlap_scores(&h, &tok(r));
            match variant {
                OverlapVariant::P => p,
                OverlapVariant::R => rc,
                OverlapVariant::F => f,
            }
        })
        .fold(0.0, f64::max)
}

/// Share of repeated n-grams: `1 - distinct / total`; 0 below n tokens.
pub fn rep_ngram_tokens(tokens: &[String], n: usize) -> f64 {
    if n == 0 || tokens.len() < n {
        return 0.0;
    }
    let counts = ngram_counts(tokens, n);
    let total = tokens.len() - n + 1;
    1.0 - counts.len() as f64 / total as f64
}

pub fn rep_ngram(hyp: &str, n: usize) -> f64 {
    rep_ngram_tokens(&tok(hyp), n)
}

/// `distinct / total` n-grams; 1 below n tokens.
pub fn distinct_n(hyp: &str, n: usize) -> f64 {
    let tokens = tok(hyp);
    if n == 0 || tokens.len() < n {
        return 1.0;
    }
    1.0 - rep_ngram_tokens(&tokens, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BuiltinKind {
    Bleu,
    Rouge2,
    RougeL,
    Overlap(OverlapVariant),
    Rep4,
    Distinct2,
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 8] = [
    "bleu", "rouge2", "rougeL", "overlap-p", "overlap-r", "overlap-f", "rep4", "distinct2",
];

#[derive(Debug, Clone)]
pub struct Builtin {
    kind: BuiltinKind,
    descriptor: MetricDescriptor,
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor.name)
    }
}

/// Look up a built-in metric by registry name.
pub fn builtin(name: &str) -> Result<Builtin> {
    let kind = match name {
        "bleu" => BuiltinKind::Bleu,
        "rouge2" => BuiltinKind::Rouge2,
        "rougeL" => BuiltinKind::RougeL,
        "overlap-p" => BuiltinKind::Overlap(OverlapVariant::P),
        "overlap-r" => BuiltinKind::Overlap(OverlapVariant::R),
        "overlap-f" => BuiltinKind::Overlap(OverlapVariant::F),
        "rep4" => BuiltinKind::Rep4,
        "distinct2" => BuiltinKind::Distinct2,
        other => {
            return Err(Error::invalid(format!(
                "unknown metric {other:?} (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    let references = !matches!(kind, BuiltinKind::Rep4 | BuiltinKind::Distinct2);
    Ok(Builtin {
        kind,
        descriptor: MetricDescriptor {
            name: name.to_string(),
            higher_is_better: true,
            scope: Scope::Sample,
            needs: Needs {
                source: false,
                references,
            },
            multi_reference: references,
        },
    })
}

impl Metric for Builtin {
    fn descriptor(&self) -> &MetricDescriptor {
        &self.descriptor
    }

    fn score(&self, hyp: &str, _source: Option<&str>, refs: &[String]) -> Result<f64> {
        if self.descriptor.needs.references && refs.is_empty() {
            return Err(Error::invalid(format!(
                "metric {} needs at least one reference",
                self.descriptor.name
            )));
        }
        Ok(match self.kind {
            BuiltinKind::Bleu => bleu(hyp, refs, 4)?,
            BuiltinKind::Rouge2 => rouge_n(hyp, refs, 2),
            BuiltinKind::RougeL => rouge_l(hyp, refs),
            BuiltinKind::Overlap(v) => overlap_prf(hyp, refs, v),
            BuiltinKind::Rep4 => 0.0 - rep_ngram(hyp, 4),
            BuiltinKind::Distinct2 => distinct_n(hyp, 2),
        })
    }
}

/// Which hypothesis set a score belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum NoiseLabel {
    Gold,
    Noised {
        kind: NoiseKind,
        level: f64,
        level_index: usize,
    },
}

/// Scores of one hypothesis set under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub metric: String,
    pub noise: NoiseLabel,
    /// Run index; `None` for gold and for seed aggregates.
    pub seed: Option<u32>,
    /// Absent for set-scope metrics.
    pub per_sample: Option<Vec<f64>>,
    pub mean: f64,
    /// Population std over seeds; 0 for single runs.
    pub std: f64,
    pub noise_ratio: f64,
}

impl ScoreRecord {
    pub fn level_index(&self) -> usize {
        match self.noise {
            NoiseLabel::Gold => 0,
            NoiseLabel::Noised { level_index, .. } => level_index,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn refs(r: &[&str]) -> Vec<String> {
        r.iter().map(|s| s.to_string()).collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn bleu_identity_is_one() {
        let h = "the cat sat on the mat .";
        assert!(close(bleu(h, &refs(&[h]), 4).unwrap(), 1.0));
        assert!(close(bleu("two words", &refs(&["two words"]), 4).unwrap(), 1.0));
    }

    #[test]
    fn bleu_clips_repeated_unigrams() {
        let hyp = tok("the the the the");
        let r = vec![tok("the cat")];
        assert_eq!(clipped_precision(&hyp, &r, 1), (1, 4));
    }

    #[test]
    fn bleu_multi_reference_clip_is_max_per_reference() {
        let hyp = tok("the the cat");
        let r = vec![tok("the cat"), tok("the the dog")];
        assert_eq!(clipped_precision(&hyp, &r, 1), (3, 3));
    }

    #[test]
    fn bleu_brevity_penalty() {
        let r = refs(&["a b c d e f g h"]);
        let short = bleu("a b c d", &r, 4).unwrap();
        // all n-gram precisions are 1, only BP remains: exp(1 - 8/4)
        assert!(close(short, (-1.0f64).exp()));
        assert!(short < 1.0);
        assert!(bleu("a b", &[], 4).is_err());
    }

    #[test]
    fn rouge2_examples() {
        assert!(close(rouge_n("a b c", &refs(&["a b c"]), 2), 1.0));
        assert!(close(rouge_n("a b c", &refs(&["x y z"]), 2), 0.0));
        assert!(close(rouge_n("a b c", &refs(&["a b d"]), 2), 0.5));
        assert!(close(rouge_n("a", &refs(&["a"]), 2), 1.0));
    }

    #[test]
    fn rouge_l_examples() {
        assert!(close(rouge_l("she went home", &refs(&["she went to work"])), 4.0 / 7.0));
        assert!(close(rouge_l("she went", &refs(&["she went"])), 1.0));
        assert!(close(rouge_l("a b", &refs(&["c d"])), 0.0));
    }

    #[test]
    fn overlap_examples() {
        let (p, r, f) = overlap_scores(&tok("a b"), &tok("a c d"));
        assert!(close(p, 0.5) && close(r, 1.0 / 3.0) && close(f, 0.4));
        let (p, r, f) = overlap_scores(&tok("x y z"), &tok("x y z"));
        assert!(close(p, 1.0) && close(r, 1.0) && close(f, 1.0));
        // prefix of the reference: precision stays 1 at any depth
        let reference = "a b c d e f g h";
        for k in 1..=8 {
            let hyp: Vec<&str> = reference.split(' ').take(k).collect();
            assert!(close(overlap_prf(&hyp.join(" "), &refs(&[reference]), OverlapVariant::P), 1.0));
        }
    }

    #[test]
    fn rep_and_distinct() {
        assert!(close(rep_ngram("a b c d e f", 4), 0.0));
        assert!(close(rep_ngram("x x x x x x x", 4), 0.75));
        assert!(close(rep_ngram("a b", 4), 0.0));
        assert!(close(distinct_n("a b", 4), 1.0));
        assert!(close(distinct_n("a a a", 2), 0.5));
    }

    #[test]
    fn registry() {
        for name in BUILTIN_NAMES {
            let m = builtin(name).unwrap();
            assert_eq!(m.descriptor().name, name);
            assert_eq!(m.descriptor().scope, Scope::Sample);
            assert!(m.descriptor().higher_is_better);
        }
        assert!(builtin("bertscore").is_err());
        let rep = builtin("rep4").unwrap();
        assert!(close(rep.score("x x x x x x x", None, &[]).unwrap(), -0.75));
        assert!(builtin("rouge2").unwrap().score("a b", None, &[]).is_err());
    }

    fn text() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof!["[a-e]", Just(".".to_string())], 1..30)
            .prop_map(|t| t.join(" "))
    }

    proptest! {
        #[test]
        fn self_reference_is_maximal(h in text()) {
            prop_assume!(!tok(&h).is_empty());
            for name in ["bleu", "rouge2", "rougeL", "overlap-p", "overlap-r", "overlap-f"] {
                let s = builtin(name).unwrap().score(&h, None, &[h.clone()]).unwrap();
                prop_assert!(close(s, 1.0), "{} scored {}", name, s);
            }
        }

        #[test]
        fn scores_are_bounded(h in text(), r in text()) {
            let rs = vec![r];
            for s in [rouge_n(&h, &rs, 2), rouge_l(&h, &rs),
                      overlap_prf(&h, &rs, OverlapVariant::P),
                      overlap_prf(&h, &rs, OverlapVariant::R),
                      overlap_prf(&h, &rs, OverlapVariant::F),
                      bleu(&h, &rs, 4).unwrap()] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
            }
        }

        #[test]
        fn rep_plus_distinct_is_one(h in text()) {
            let t = tok(&h);
            if t.len() >= 4 {
                prop_assert!(close(rep_ngram(&h, 4) + distinct_n(&h, 4), 1.0));
            }
        }

        #[test]
        fn recall_never_rises_under_truncation(h in text(), r in text(), cut in 0usize..30) {
            let ht = tok(&h);
            let rt = tok(&r);
            let k = cut.min(ht.len());
            let (_, before, _) = overlap_scores(&ht, &rt);
            let (_, after, _) = overlap_scores(&ht[..ht.len() - k], &rt);
            prop_assert!(after <= before + 1e-12);
        }
    }
}

//! Token-level Levenshtein distance and the noise-ratio statistic.
//!
//! The noise-ratio of a noised set is the mean over samples of
//! `levenshtein(noised, gold) / len(gold)`, measured in tokens. Kinds that
//! only move tokens around are halved, since one transposition costs two
//! edits.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotate;
use crate::perturb::NoiseKind;
use crate::{Error, Result};

/// Unit-cost insert / delete / substitute distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Kinds whose raw ratio is divided by two.
pub fn is_switching(kind: NoiseKind) -> bool {
    matches!(
        kind,
        NoiseKind::SentenceSwitch
            | NoiseKind::EntitySwitch
            | NoiseKind::VerbSwitch
            | NoiseKind::NounSwitch
            | NoiseKind::LocalSwap
            | NoiseKind::MiddleSwap
    )
}

/// Ratio for one gold / noised pair, before any halving.
pub fn sample_ratio(gold: &str, noised: &str) -> (usize, usize, f64) {
    let g = annotate::tokens(gold);
    let n = annotate::tokens(noised);
    let lev = levenshtein(&n, &g);
    let len = g.len().max(1);
    (lev, g.len(), lev as f64 / len as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRatio {
    pub id: String,
    pub levenshtein: usize,
    pub len_gold: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRatioReport {
    pub per_sample: Vec<SampleRatio>,
    pub mean_ratio: f64,
    pub switching_halved: bool,
}

/// Noise-ratio over `(id, text)` pairs aligned by id. Every gold id must
/// have exactly one noised counterpart and vice versa.
pub fn noise_ratio(
    gold: &[(&str, &str)],
    noised: &[(&str, &str)],
    kind: Option<NoiseKind>,
) -> Result<NoiseRatioReport> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(noised.len());
    for &(id, text) in noised {
        if by_id.insert(id, text).is_some() {
            return Err(Error::invalid(format!("duplicate noised id {id:?}")));
        }
    }
    if gold.is_empty() {
        return Err(Error::invalid("empty gold set"));
    }
    let halve = kind.is_some_and(is_switching);
    let mut per_sample = Vec::with_capacity(gold.len());
    for &(id, g) in gold {
        let n = by_id
            .remove(id)
            .ok_or_else(|| Error::invalid(format!("no noised hypothesis for id {id:?}")))?;
        let (lev, len, raw) = sample_ratio(g, n);
        per_sample.push(SampleRatio {
            id: id.to_string(),
            levenshtein: lev,
            len_gold: len,
            ratio: if halve { raw / 2.0 } else { raw },
        });
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(Error::invalid(format!("noised id {extra:?} has no gold hypothesis")));
    }
    let mean_ratio = per_sample.iter().map(|s| s.ratio).sum::<f64>() / per_sample.len() as f64;
    Ok(NoiseRatioReport {
        per_sample,
        mean_ratio,
        switching_halved: halve,
    })
}

//! Exact n-gram counts over the gold hypotheses of a corpus.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotate;
use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramCount {
    pub tokens: Vec<String>,
    pub count: usize,
}

/// N-grams sorted by descending count; equal counts are ordered by the
/// token sequence, lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramTable {
    pub n: usize,
    pub entries: Vec<NgramCount>,
}

impl NgramTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, k: usize) -> &[NgramCount] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn count_of(&self, tokens: &[&str]) -> usize {
        self.entries
            .iter()
            .find(|e| e.tokens.iter().map(String::as_str).eq(tokens.iter().copied()))
            .map_or(0, |e| e.count)
    }
}

pub fn collect_ngrams_from<'a, I>(texts: I, n: usize) -> NgramTable
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
    if n > 0 {
        for text in texts {
            let toks = annotate::tokens(text);
            for w in toks.windows(n) {
                *counts.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
    }
    let mut entries: Vec<NgramCount> = counts
        .into_iter()
        .map(|(tokens, count)| NgramCount { tokens, count })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.tokens.cmp(&b.tokens)));
    NgramTable { n, entries }
}

pub fn collect_ngrams(corpus: &Corpus, n: usize) -> NgramTable {
    collect_ngrams_from(corpus.golds(), n)
}

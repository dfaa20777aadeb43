//! Token-level kinds: truncation, drops, lemmatization, repetition, local
//! swaps and punctuation noise.

use crate::annotate::{is_punct_token, AnnotatedText, PosTag, Span};
use crate::corpus::Sample;
use crate::seed::StressRng;
use crate::{Error, Result};

use super::{lemma, portion_count, select_portion, shuffled, Draft, Edit, NoiseKind, NoiseSpec, NoisedHypothesis};

pub(super) fn truncation(sample: &Sample, at: &AnnotatedText, spec: &NoiseSpec) -> Result<NoisedHypothesis> {
    let n = at.len();
    let k = portion_count(spec.level, n).min(n - 1);
    let mut draft = Draft::new(&sample.gold);
    for j in 0..k {
        draft.delete(n - 1 - j);
    }
    Ok(draft.finish(sample, spec, k == 0))
}

fn drop_eligible(at: &AnnotatedText, kind: NoiseKind) -> Result<Vec<usize>> {
    let tags: &[PosTag] = match kind {
        NoiseKind::TokenDrop => return Ok((0..at.len()).collect()),
        NoiseKind::ArticleRemoval => &[PosTag::Article],
        NoiseKind::PrepositionRemoval => &[PosTag::Preposition],
        NoiseKind::StopwordRemoval => &[PosTag::Stopword, PosTag::Article, PosTag::Preposition],
        other => unreachable!("{other} is not a drop kind"),
    };
    if at.pos.is_none() {
        return Err(Error::noise(kind, "needs POS tags; annotate with rules or an annotation file"));
    }
    Ok(at.indices_with(tags))
}

/// article / preposition / stopword removal and token_drop.
pub(super) fn drop_tokens(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let eligible = drop_eligible(at, spec.kind)?;
    // at least one token must survive
    let k = portion_count(spec.level, eligible.len()).min(at.len() - 1);
    let mut picked: Vec<usize> = shuffled(rng, &eligible).into_iter().take(k).collect();
    picked.sort_unstable_by(|a, b| b.cmp(a));
    let mut draft = Draft::new(&sample.gold);
    for &i in &picked {
        draft.delete(i);
    }
    Ok(draft.finish(sample, spec, picked.is_empty()))
}

pub(super) fn verb_lemmatization(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    if !at.has_content_tags() {
        return Err(Error::noise(spec.kind, "needs VERB tags from an annotation file"));
    }
    let verbs = at.indices_with(&[PosTag::Verb]);
    let mut draft = Draft::new(&sample.gold);
    for i in select_portion(rng, &verbs, spec.level) {
        let tok = &at.tokens[i];
        match lemma::lemmatize(tok) {
            Some(l) if l != *tok => draft.replace(i, l),
            Some(_) => {}
            None => draft.note(Some(i), format!("no lemma for {tok:?}")),
        }
    }
    Ok(draft.finish(sample, spec, verbs.is_empty()))
}

pub(super) fn repeated_token(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let words: Vec<usize> = (0..at.len()).filter(|&i| !is_punct_token(&at.tokens[i])).collect();
    let mut draft = Draft::new(&sample.gold);
    let picked = select_portion(rng, &words, spec.level);
    for &i in picked.iter().rev() {
        draft.insert(i + 1, at.tokens[i].clone());
    }
    Ok(draft.finish(sample, spec, words.is_empty()))
}

/// Swap selected tokens with their right neighbour. Pairs never overlap and
/// never involve punctuation.
pub(super) fn local_swap(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let word = |i: usize| !is_punct_token(&at.tokens[i]);
    let eligible: Vec<usize> = (0..at.len().saturating_sub(1))
        .filter(|&i| word(i) && word(i + 1))
        .collect();
    let mut taken = vec![false; at.len()];
    let mut accepted = Vec::new();
    for i in shuffled(rng, &eligible) {
        if !taken[i] && !taken[i + 1] {
            taken[i] = true;
            taken[i + 1] = true;
            accepted.push(i);
        }
    }
    let k = portion_count(spec.level, eligible.len()).min(accepted.len());
    let mut picked = accepted[..k].to_vec();
    picked.sort_unstable();
    let mut draft = Draft::new(&sample.gold);
    for i in picked {
        draft.apply(Edit::SwapSpans {
            first: Span::new(i, i + 1),
            second: Span::new(i + 1, i + 2),
        });
    }
    Ok(draft.finish(sample, spec, eligible.is_empty()))
}

fn punct_map(tok: &str) -> Option<&'static str> {
    match tok {
        "," => Some("."),
        "." => Some(","),
        "?" | "!" | ":" => Some("."),
        _ => None,
    }
}

pub(super) fn noised_punctuation(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let marks: Vec<usize> = (0..at.len()).filter(|&i| punct_map(&at.tokens[i]).is_some()).collect();
    let mut draft = Draft::new(&sample.gold);
    for i in select_portion(rng, &marks, spec.level) {
        if let Some(to) = punct_map(&at.tokens[i]) {
            draft.replace(i, to);
        }
    }
    Ok(draft.finish(sample, spec, marks.is_empty()))
}

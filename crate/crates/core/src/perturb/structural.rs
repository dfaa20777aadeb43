//! Sentence- and constituent-level kinds.

use rand::Rng;

use crate::annotate::{is_punct_token, lexicon, AnnotatedText, PosTag, Span};
use crate::corpus::Sample;
use crate::seed::StressRng;
use crate::{Error, Result};

use super::lemma::{self, Form};
use super::{
    portion_count, select_portion, shuffled, swap_tracked, DonorPool, Draft, Edit, NoiseKind, NoiseSpec,
    NoisedHypothesis, PerturbContext,
};

fn is_function_word(tok: &str) -> bool {
    lexicon::is_article(tok) || lexicon::is_preposition(tok) || lexicon::is_stopword(tok)
}

fn capitalized(tok: &str) -> String {
    let mut c = tok.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn lowercased_first(tok: &str) -> String {
    let mut c = tok.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

fn starts_upper(tok: &str) -> bool {
    tok.chars().next().is_some_and(char::is_uppercase)
}

/// Sentence span without its trailing punctuation and closing marks.
fn sentence_body(at: &AnnotatedText, s: Span) -> Span {
    let mut end = s.end;
    while end > s.start && is_punct_token(&at.tokens[end - 1]) {
        end -= 1;
    }
    Span::new(s.start, end)
}

/// Swap the two halves of each selected sentence, keeping its final
/// punctuation terminal. The level is the portion of sentences.
pub(super) fn middle_swap(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let all: Vec<usize> = (0..at.sentence_spans.len()).collect();
    let mut draft = Draft::new(&sample.gold);
    let mut any = false;
    for si in select_portion(rng, &all, spec.level) {
        let body = sentence_body(at, at.sentence_spans[si]);
        let m = body.len() / 2;
        if m == 0 {
            draft.note(Some(body.start), "sentence too short to swap");
            continue;
        }
        any = true;
        let left = Span::new(body.start, body.start + m);
        let right = Span::new(body.start + m, body.end);
        let before = at.tokens[body.range()].to_vec();
        draft.apply(Edit::SwapSpans { first: left, second: right });
        let after = draft.tokens()[body.range()].to_vec();
        if after == before || !starts_upper(&before[0]) {
            continue;
        }
        let new_first = &after[0];
        if !starts_upper(new_first) {
            draft.replace(body.start, capitalized(new_first));
        }
        let old_pos = body.start + right.len();
        if is_function_word(&before[0]) && before[0] != "I" {
            draft.replace(old_pos, lowercased_first(&before[0]));
        }
    }
    Ok(draft.finish(sample, spec, !any))
}

pub(super) fn sentence_switch(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let n = at.sentence_spans.len();
    let movable = if spec.options.fix_last_sentence { n.saturating_sub(1) } else { n };
    let mut draft = Draft::new(&sample.gold);
    if movable < 2 {
        draft.note(None, format!("{movable} movable sentences"));
        return Ok(draft.finish(sample, spec, true));
    }
    let order = shuffled(rng, &(0..movable).collect::<Vec<_>>());
    let mut slots = at.sentence_spans.clone();
    for pair in order.chunks_exact(2).take(spec.count()) {
        let (i, j) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        let edit = swap_tracked(&mut slots, i, j);
        draft.apply(edit);
    }
    Ok(draft.finish(sample, spec, false))
}

pub(super) fn sentence_replace(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    ctx: &PerturbContext<'_>,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let built;
    let pool = match (ctx.donor_pool, ctx.donor) {
        (Some(p), _) => p,
        (None, Some(c)) => {
            built = DonorPool::from_corpus(c);
            &built
        }
        (None, None) => return Err(Error::noise(spec.kind, "needs a donor corpus")),
    };
    let foreign: Vec<&Vec<String>> = pool.foreign(&sample.id).collect();
    if foreign.is_empty() {
        return Err(Error::noise(spec.kind, "no donor sentences"));
    }
    let all: Vec<usize> = (0..at.sentence_spans.len()).collect();
    let k = spec.count().min(all.len());
    let mut picked: Vec<usize> = shuffled(rng, &all).into_iter().take(k).collect();
    picked.sort_unstable_by(|a, b| b.cmp(a));
    let mut draft = Draft::new(&sample.gold);
    for si in picked {
        let span = at.sentence_spans[si];
        let original = &at.tokens[span.range()];
        let options: Vec<&&Vec<String>> = foreign.iter().filter(|s| s.as_slice() != original).collect();
        if options.is_empty() {
            draft.note(Some(span.start), "every donor sentence equals the original");
            continue;
        }
        let pick = options[rng.random_range(0..options.len())];
        draft.apply(Edit::ReplaceSpan {
            span,
            tokens: (*pick).clone(),
        });
    }
    Ok(draft.finish(sample, spec, false))
}

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "am", "will", "would", "can", "could", "shall", "should", "may", "might", "must",
];
const PERFECT: &[&str] = &["has", "have", "had"];
const PLURAL_SUBJECTS: &[&str] = &["i", "you", "we", "they"];
const SINGULAR_SUBJECTS: &[&str] = &["he", "she", "it"];

enum Negatable {
    /// Insert "not" after the token.
    Auxiliary,
    /// Replace with do-support: `aux`, "not", `lemma`.
    DoSupport { aux: &'static str, lemma: String },
}

fn classify(at: &AnnotatedText, i: usize, tagged: bool) -> Option<Negatable> {
    let tok = &at.tokens[i];
    let lower = tok.to_lowercase();
    let next = at.tokens.get(i + 1).map(String::as_str).unwrap_or("");
    if AUXILIARIES.contains(&lower.as_str()) {
        return Some(Negatable::Auxiliary);
    }
    if PERFECT.contains(&lower.as_str()) && lemma::is_participle(next) {
        return Some(Negatable::Auxiliary);
    }
    let verbish = if tagged {
        at.tag(i) == Some(PosTag::Verb)
    } else {
        let prev = i.checked_sub(1).map(|p| at.tokens[p].to_lowercase()).unwrap_or_default();
        match lemma::analyze(&lower) {
            Some((_, Form::Past)) => true,
            Some((_, Form::Base)) => PLURAL_SUBJECTS.contains(&prev.as_str()),
            Some((_, Form::ThirdPerson)) => SINGULAR_SUBJECTS.contains(&prev.as_str()),
            _ => false,
        }
    };
    if !verbish {
        return None;
    }
    let (base, form) = lemma::analyze(&lower)?;
    let aux = match form {
        Form::Past => "did",
        Form::ThirdPerson => "does",
        Form::Base => "do",
        Form::Participle | Form::Gerund => return None,
    };
    Some(Negatable::DoSupport { aux, lemma: base })
}

/// Negate a portion of sentences: "not" after an auxiliary or copula,
/// otherwise do-support on the first verb.
pub(super) fn negation(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let tagged = at.has_content_tags();
    let all: Vec<usize> = (0..at.sentence_spans.len()).collect();
    let mut picked = select_portion(rng, &all, spec.level);
    picked.reverse();
    let mut draft = Draft::new(&sample.gold);
    for si in picked {
        let span = at.sentence_spans[si];
        let found = span.range().find_map(|i| classify(at, i, tagged).map(|n| (i, n)));
        match found {
            Some((i, Negatable::Auxiliary)) => draft.insert(i + 1, "not"),
            Some((i, Negatable::DoSupport { aux, lemma })) => {
                draft.replace(i, lemma::match_case(&at.tokens[i], aux));
                draft.insert(i + 1, "not");
                draft.insert(i + 2, lemma);
            }
            None => draft.note(Some(span.start), "no negatable verb in sentence"),
        }
    }
    let skipped = !draft.has_changes();
    Ok(draft.finish(sample, spec, skipped))
}

fn generic_phrase(label: Option<&str>) -> &'static [&'static str] {
    match label.map(str::to_ascii_uppercase).as_deref() {
        Some("PERSON" | "PER") => &["a", "person"],
        Some("GPE" | "LOC" | "FAC") => &["a", "place"],
        Some("ORG") => &["an", "organization"],
        _ => &["a", "thing"],
    }
}

/// Items that may be exchanged: each has a span and a grouping key.
fn switch_items(at: &AnnotatedText, kind: NoiseKind) -> Result<Vec<(Span, String)>> {
    let tag = match kind {
        NoiseKind::EntitySwitch => {
            let ents = at
                .entities
                .as_ref()
                .ok_or_else(|| Error::noise(kind, "needs entity annotations"))?;
            let mut items: Vec<(Span, String)> = ents
                .iter()
                .map(|e| (e.span, e.label.clone().unwrap_or_default()))
                .collect();
            items.sort_by_key(|(s, _)| *s);
            return Ok(items);
        }
        NoiseKind::VerbSwitch => PosTag::Verb,
        NoiseKind::NounSwitch => PosTag::Noun,
        other => unreachable!("{other} is not a switch kind"),
    };
    if !at.has_content_tags() {
        return Err(Error::noise(kind, format!("needs {tag} tags from an annotation file")));
    }
    Ok(at
        .indices_with(&[tag])
        .into_iter()
        .map(|i| (Span::new(i, i + 1), tag.to_string()))
        .collect())
}

/// generic_entity, entity_switch, verb_switch and noun_switch.
pub(super) fn entity_ops(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    if spec.kind == NoiseKind::GenericEntity {
        return generic_entity(sample, at, spec, rng);
    }
    let items = switch_items(at, spec.kind)?;
    // pair items of the same group in shuffled order, skipping identical text
    let order = shuffled(rng, &(0..items.len()).collect::<Vec<_>>());
    let mut used = vec![false; items.len()];
    let mut pairs = Vec::new();
    for (oi, &a) in order.iter().enumerate() {
        if used[a] {
            continue;
        }
        let partner = order[oi + 1..].iter().copied().find(|&b| {
            !used[b]
                && items[b].1 == items[a].1
                && at.tokens[items[b].0.range()] != at.tokens[items[a].0.range()]
        });
        if let Some(b) = partner {
            used[a] = true;
            used[b] = true;
            pairs.push((a.min(b), a.max(b)));
        }
    }
    let mut draft = Draft::new(&sample.gold);
    if pairs.is_empty() {
        return Ok(draft.finish(sample, spec, true));
    }
    let mut slots: Vec<Span> = items.iter().map(|(s, _)| *s).collect();
    for &(i, j) in pairs.iter().take(spec.count()) {
        let edit = swap_tracked(&mut slots, i, j);
        draft.apply(edit);
    }
    Ok(draft.finish(sample, spec, false))
}

fn generic_entity(
    sample: &Sample,
    at: &AnnotatedText,
    spec: &NoiseSpec,
    rng: &mut StressRng,
) -> Result<NoisedHypothesis> {
    let ents = at
        .entities
        .as_ref()
        .ok_or_else(|| Error::noise(spec.kind, "needs entity annotations"))?;
    let idx: Vec<usize> = (0..ents.len()).collect();
    let k = portion_count(spec.level, ents.len());
    let mut picked: Vec<usize> = shuffled(rng, &idx).into_iter().take(k).collect();
    picked.sort_unstable_by_key(|&e| std::cmp::Reverse(ents[e].span.start));
    let mut draft = Draft::new(&sample.gold);
    for e in picked {
        let ent = &ents[e];
        let mut phrase: Vec<String> = generic_phrase(ent.label.as_deref()).iter().map(|s| s.to_string()).collect();
        let sentence_start = at.sentence_spans.iter().any(|s| s.start == ent.span.start);
        if sentence_start {
            phrase[0] = capitalized(&phrase[0]);
        }
        draft.apply(Edit::ReplaceSpan {
            span: ent.span,
            tokens: phrase,
        });
    }
    Ok(draft.finish(sample, spec, ents.is_empty()))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::*;
    use crate::annotate::tokenize;
    use crate::corpus::{Corpus, Task};

    fn spec(kind: NoiseKind, level: f64) -> NoiseSpec {
        NoiseSpec::new(kind, level, 11)
    }

    #[test]
    fn middle_swap_examples() {
        let g = "She went to the office.";
        assert_eq!(run(g, &ruled(g), spec(NoiseKind::MiddleSwap, 1.0)).text, "To the office she went.");
        let g = "Hi.";
        assert!(run(g, &ruled(g), spec(NoiseKind::MiddleSwap, 1.0)).skipped);
        let g = "a b a b";
        assert_eq!(run(g, &ruled(g), spec(NoiseKind::MiddleSwap, 1.0)).text, g);
        let g = "Boston is big.";
        assert_eq!(run(g, &ruled(g), spec(NoiseKind::MiddleSwap, 1.0)).text, "Is big Boston.");
    }

    #[test]
    fn sentence_switch_examples() {
        let g = "She went to the office in Boston. And she talked to her staff about Paris.";
        let out = run(g, &ruled(g), spec(NoiseKind::SentenceSwitch, 1.0));
        assert_eq!(out.text, "And she talked to her staff about Paris. She went to the office in Boston.");
        let out = run(g, &ruled(g), spec(NoiseKind::SentenceSwitch, 0.0));
        assert_eq!(out.text, g);
        let mut fixed = spec(NoiseKind::SentenceSwitch, 1.0);
        fixed.options.fix_last_sentence = true;
        assert!(run(g, &ruled(g), fixed).skipped);
    }

    #[test]
    fn sentence_switch_many_pairs() {
        let g: String = (0..12).map(|i| format!("Sentence number {i} here.")).collect::<Vec<_>>().join(" ");
        let mut s = spec(NoiseKind::SentenceSwitch, 6.0);
        s.options.fix_last_sentence = false;
        let out = run(&g, &ruled(&g), s);
        assert_eq!(out.edit_count(), 6);
        let mut gs: Vec<String> = tokenize(&g).sentence_spans.iter().map(|sp| tokenize(&g).tokens[sp.range()].join(" ")).collect();
        let at = tokenize(&out.text);
        let mut ns: Vec<String> = at.sentence_spans.iter().map(|sp| at.tokens[sp.range()].join(" ")).collect();
        gs.sort();
        ns.sort();
        assert_eq!(gs, ns);
    }

    #[test]
    fn sentence_replace_examples() {
        let corpus = Corpus::new(
            Task::OpenEnded,
            vec![
                Sample::new("s1", "One fish. Two fish."),
                Sample::new("s2", "A red boat sails."),
            ],
        )
        .unwrap();
        let g = "One fish. Two fish.";
        let ctx = PerturbContext {
            donor: Some(&corpus),
            ..Default::default()
        };
        let out = run_ctx(g, &ruled(g), spec(NoiseKind::SentenceReplace, 1.0), &ctx);
        assert_eq!(out.edit_count(), 1);
        assert!(out.text.contains("A red boat sails."));
        let alone = Corpus::new(Task::OpenEnded, vec![Sample::new("s1", g)]).unwrap();
        let ctx = PerturbContext {
            donor: Some(&alone),
            ..Default::default()
        };
        let err = perturb(&sample(g), &ruled(g), &spec(NoiseKind::SentenceReplace, 1.0), &ctx).unwrap_err();
        assert!(err.to_string().contains("no donor sentences"));
    }

    #[test]
    fn negation_examples() {
        let g = "She went to the office.";
        assert_eq!(run(g, &ruled(g), spec(NoiseKind::Negation, 1.0)).text, "She did not go to the office.");
        let g = "She is here.";
        assert_eq!(run(g, &ruled(g), spec(NoiseKind::Negation, 1.0)).text, "She is not here.");
        let g = "They walk home. He talks. We have eaten.";
        assert_eq!(
            run(g, &ruled(g), spec(NoiseKind::Negation, 1.0)).text,
            "They do not walk home. He does not talk. We have not eaten."
        );
        let g = "Blue sky.";
        let out = run(g, &ruled(g), spec(NoiseKind::Negation, 1.0));
        assert!(out.skipped);
        assert!(matches!(out.edits[..], [Edit::Note { .. }]));
    }

    #[test]
    fn negation_uses_verb_tags_when_present() {
        let g = "Dogs walk slowly.";
        let at = tagged(g, "NOUN VERB OTHER PUNCT", "");
        assert_eq!(run(g, &at, spec(NoiseKind::Negation, 1.0)).text, "Dogs do not walk slowly.");
    }

    const TABLE: &str = "She went to the office in Boston. And she talked to her staff about Paris.";
    const TAGS: &str = "OTHER VERB PREPOSITION ARTICLE NOUN PREPOSITION NOUN PUNCT OTHER OTHER VERB PREPOSITION OTHER NOUN PREPOSITION NOUN PUNCT";

    #[test]
    fn entity_switch_example() {
        let at = tagged(TABLE, TAGS, r#"[[6,7,"GPE"],[15,16,"GPE"]]"#);
        let out = run(TABLE, &at, spec(NoiseKind::EntitySwitch, 1.0));
        assert_eq!(out.text, "She went to the office in Paris. And she talked to her staff about Boston.");
    }

    #[test]
    fn generic_entity_example() {
        let at = tagged(TABLE, TAGS, r#"[[6,7,"GPE"],[15,16,"PERSON"]]"#);
        let out = run(TABLE, &at, spec(NoiseKind::GenericEntity, 1.0));
        assert_eq!(out.text, "She went to the office in a place. And she talked to her staff about a person.");
        let none = tagged(TABLE, TAGS, "");
        assert!(run(TABLE, &none, spec(NoiseKind::GenericEntity, 1.0)).skipped);
        let s = sample(TABLE);
        assert!(perturb(&s, &ruled(TABLE), &spec(NoiseKind::GenericEntity, 1.0), &PerturbContext::default()).is_err());
    }

    #[test]
    fn verb_and_noun_switch() {
        let at = tagged(TABLE, TAGS, "");
        let out = run(TABLE, &at, spec(NoiseKind::VerbSwitch, 1.0));
        assert_eq!(out.text, "She talked to the office in Boston. And she went to her staff about Paris.");
        let out = run(TABLE, &at, spec(NoiseKind::NounSwitch, 2.0));
        assert_eq!(out.edit_count(), 2);
        let s = sample(TABLE);
        assert!(perturb(&s, &ruled(TABLE), &spec(NoiseKind::VerbSwitch, 1.0), &PerturbContext::default()).is_err());
    }
}

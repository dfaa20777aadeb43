//! Greedy adversarial search for sample-level metric blind spots.
//!
//! Starting from the gold hypothesis, each iteration tries deleting every
//! token and substituting it with every provider candidate, then applies the
//! single edit the target metric likes best. The metric sees the perturbed
//! text as hypothesis and the gold text as its only reference. The search
//! stops once the noise-ratio to gold reaches the configured minimum.
//!
//! Only edits that strictly increase the token distance to gold are
//! considered, so the search cannot undo itself and ends after at most
//! `len(gold)` iterations.

use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterClient, AdapterConfig, Scorer, ScoreItem};
use crate::annotate;
use crate::corpus::{Corpus, Sample};
use crate::distance::{self, levenshtein};
use crate::exec::Exec;
use crate::metrics::{Metric, MetricDescriptor, Needs, Scope};
use crate::perturb::{CandidateProvider, Edit};
use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Default number of candidates kept from an external provider.
pub const DEFAULT_EXTERNAL_K: usize = 8;
pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderSpec {
    Confusion,
    /// Command line of a candidate-provider process.
    External(Vec<String>),
}

impl FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "confusion" {
            return Ok(ProviderSpec::Confusion);
        }
        if let Some(cmd) = s.strip_prefix("external:") {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                return Err(Error::invalid("external provider needs a command"));
            }
            return Ok(ProviderSpec::External(argv));
        }
        Err(Error::invalid(format!(
            "unknown candidate provider {s:?} (expected confusion or external:<cmd>)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub metric: String,
    pub min_ratio: f64,
    pub providers: Vec<ProviderSpec>,
    pub max_iters: usize,
}

impl AttackConfig {
    pub fn new(metric: impl Into<String>, min_ratio: f64) -> Self {
        AttackConfig {
            metric: metric.into(),
            min_ratio,
            providers: vec![ProviderSpec::Confusion],
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_ratio > 0.0 && self.min_ratio.is_finite()) {
            return Err(Error::invalid(format!("min ratio must be positive, got {}", self.min_ratio)));
        }
        if self.providers.is_empty() {
            return Err(Error::invalid("attack needs at least one candidate provider"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub sample_id: String,
    pub text: String,
    pub ratio: f64,
    /// Whether `ratio` reached the configured minimum.
    pub reached: bool,
    pub gold_score: f64,
    /// Target score after each applied edit.
    pub trajectory: Vec<f64>,
    pub edits: Vec<Edit>,
}

/// One candidate edit with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEdit {
    pub edit: Edit,
    pub score: f64,
}

/// Candidate substitutes worth trying for `tokens[pos]`, deduplicated and
/// sorted, without case-only variants, punctuation or multi-token strings.
pub fn substitutes(tokens: &[String], pos: usize, providers: &[&dyn CandidateProvider]) -> Result<Vec<String>> {
    let current = &tokens[pos];
    let mut out = BTreeSet::new();
    for p in providers {
        for c in p.candidates(tokens, pos)? {
            if c.to_lowercase() == current.to_lowercase() || annotate::is_punct_token(&c) {
                continue;
            }
            if annotate::tokens(&c) != [c.as_str()] {
                continue;
            }
            out.insert(c);
        }
    }
    Ok(out.into_iter().collect())
}

fn apply(tokens: &[String], edit: &Edit) -> Vec<String> {
    let mut t = tokens.to_vec();
    match edit {
        Edit::Delete { pos } => {
            t.remove(*pos);
        }
        Edit::Replace { pos, token } => t[*pos] = token.clone(),
        _ => unreachable!("attacks only delete and substitute"),
    }
    t
}

/// Every edit of `current` that moves it strictly further from `gold`, in
/// tie-break order: position, then delete before substitute, then
/// candidate text.
pub fn neighborhood(gold: &[String], current: &[String], providers: &[&dyn CandidateProvider]) -> Result<Vec<Edit>> {
    let here = levenshtein(current, gold);
    let mut out = Vec::new();
    for pos in 0..current.len() {
        let mut ops = Vec::new();
        if current.len() > 1 {
            ops.push(Edit::Delete { pos });
        }
        for token in substitutes(current, pos, providers)? {
            ops.push(Edit::Replace { pos, token });
        }
        out.extend(ops.into_iter().filter(|e| levenshtein(&apply(current, e), gold) > here));
    }
    Ok(out)
}

fn oriented(metric: &dyn Metric, hyp: &[String], source: Option<&str>, gold: &str) -> Result<f64> {
    let refs = [gold.to_string()];
    let s = metric.score(&annotate::detokenize(hyp), source, &refs)?;
    Ok(if metric.descriptor().higher_is_better { s } else { -s })
}

/// Score every edit in `edits`; scores are oriented so higher is better.
pub fn score_edits(
    metric: &dyn Metric,
    current: &[String],
    edits: &[Edit],
    source: Option<&str>,
    gold: &str,
) -> Result<Vec<ScoredEdit>> {
    edits
        .iter()
        .map(|e| {
            Ok(ScoredEdit {
                edit: e.clone(),
                score: oriented(metric, &apply(current, e), source, gold)?,
            })
        })
        .collect()
}

/// First edit with the maximum score.
pub fn best_edit(scored: &[ScoredEdit]) -> Option<&ScoredEdit> {
    let mut best: Option<&ScoredEdit> = None;
    for s in scored {
        if best.is_none_or(|b| s.score > b.score) {
            best = Some(s);
        }
    }
    best
}

fn token_ratio(current: &[String], gold: &[String]) -> f64 {
    levenshtein(current, gold) as f64 / gold.len().max(1) as f64
}

/// Greedy attack on one sample.
pub fn greedy_attack(
    sample: &Sample,
    cfg: &AttackConfig,
    metric: &dyn Metric,
    providers: &[&dyn CandidateProvider],
) -> Result<AttackResult> {
    let gold = annotate::tokens(&sample.gold);
    if gold.is_empty() {
        return Err(Error::invalid(format!("sample {:?} has an empty gold text", sample.id)));
    }
    let source = sample.source.as_deref();
    let gold_score = oriented(metric, &gold, source, &sample.gold)?;
    let mut current = gold.clone();
    let mut trajectory = Vec::new();
    let mut edits = Vec::new();
    while token_ratio(&current, &gold) < cfg.min_ratio && edits.len() < cfg.max_iters {
        let hood = neighborhood(&gold, &current, providers)?;
        if hood.is_empty() {
            if edits.is_empty() {
                return Err(Error::invalid(format!(
                    "sample {:?}: no candidates at any position and deletion would empty the text",
                    sample.id
                )));
            }
            log::warn!("sample {:?}: attack ran out of edits", sample.id);
            break;
        }
        let scored = score_edits(metric, &current, &hood, source, &sample.gold)?;
        let best = best_edit(&scored).expect("neighborhood is not empty");
        current = apply(&current, &best.edit);
        trajectory.push(best.score);
        edits.push(best.edit.clone());
    }
    let text = if edits.is_empty() {
        sample.gold.clone()
    } else {
        annotate::detokenize(&current)
    };
    let (_, _, ratio) = distance::sample_ratio(&sample.gold, &text);
    Ok(AttackResult {
        sample_id: sample.id.clone(),
        text,
        ratio,
        reached: ratio >= cfg.min_ratio,
        gold_score,
        trajectory,
        edits,
    })
}

/// Baseline: `n` edits drawn uniformly from the same neighborhood the
/// greedy search uses. Returns the text and its oriented score.
pub fn random_attack(
    sample: &Sample,
    n: usize,
    metric: &dyn Metric,
    providers: &[&dyn CandidateProvider],
    seed: u64,
) -> Result<(String, f64)> {
    let gold = annotate::tokens(&sample.gold);
    let mut rng = rng_from_seed(seed);
    let mut current = gold.clone();
    for _ in 0..n {
        let hood = neighborhood(&gold, &current, providers)?;
        if hood.is_empty() {
            break;
        }
        current = apply(&current, &hood[rng.random_range(0..hood.len())]);
    }
    let score = oriented(metric, &current, sample.source.as_deref(), &sample.gold)?;
    Ok((annotate::detokenize(&current), score))
}

/// Attack every sample; samples run in parallel, each querying the metric
/// serially.
pub fn attack_corpus(
    corpus: &Corpus,
    cfg: &AttackConfig,
    metric: &dyn Metric,
    providers: &[&dyn CandidateProvider],
    exec: &Exec,
) -> Result<Vec<AttackResult>> {
    cfg.validate()?;
    exec.install(|| exec.try_map(&corpus.samples, |s| greedy_attack(s, cfg, metric, providers)))
}

impl Metric for Scorer {
    fn descriptor(&self) -> &MetricDescriptor {
        Scorer::descriptor(self)
    }

    fn score(&self, hypothesis: &str, source: Option<&str>, references: &[String]) -> Result<f64> {
        self.score_one(&ScoreItem {
            id: "h".into(),
            hypothesis: hypothesis.to_string(),
            source: source.map(String::from),
            references: references.to_vec(),
        })
    }
}

const FAMILIES: &[&[&str]] = &[
    &["a", "an"],
    &["this", "these"],
    &["that", "those"],
    &["he", "she", "it", "they"],
    &["him", "her", "them"],
    &["his", "her", "its", "their"],
    &["is", "are"],
    &["was", "were"],
    &["has", "have"],
];

const NUMBERS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

fn match_case(template: &str, word: &str) -> String {
    let mut chars = template.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    if first_upper && template.chars().count() > 1 && template.chars().all(|c| !c.is_lowercase()) {
        return word.to_uppercase();
    }
    if first_upper {
        let mut w = word.chars();
        return match w.next() {
            Some(c) => c.to_uppercase().chain(w).collect(),
            None => String::new(),
        };
    }
    word.to_string()
}

/// Hand-curated confusion sets: articles, demonstratives, pronouns,
/// auxiliary agreement and the next number up.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfusionProvider;

impl ConfusionProvider {
    pub fn partners(token: &str) -> Vec<String> {
        let lower = token.to_lowercase();
        let mut out: Vec<String> = Vec::new();
        for fam in FAMILIES {
            if fam.contains(&lower.as_str()) {
                for w in fam.iter().filter(|w| **w != lower) {
                    let w = match_case(token, w);
                    if !out.contains(&w) {
                        out.push(w);
                    }
                }
            }
        }
        if let Some(i) = NUMBERS.iter().position(|n| *n == lower) {
            if let Some(next) = NUMBERS.get(i + 1) {
                out.push(match_case(token, next));
            }
        } else if !token.is_empty() && token.len() < 19 && token.bytes().all(|b| b.is_ascii_digit()) {
            let n: u64 = token.parse().expect("ascii digits");
            out.push((n + 1).to_string());
        }
        out
    }
}

impl CandidateProvider for ConfusionProvider {
    fn candidates(&self, tokens: &[String], position: usize) -> Result<Vec<String>> {
        Ok(ConfusionProvider::partners(&tokens[position]))
    }
}

/// Candidates from an external process speaking the adapter protocol.
#[derive(Debug)]
pub struct ExternalProvider {
    client: Mutex<AdapterClient>,
    k: usize,
}

impl ExternalProvider {
    pub fn spawn(cfg: &AdapterConfig, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("candidate count k must be at least 1"));
        }
        Ok(ExternalProvider {
            client: Mutex::new(AdapterClient::spawn(cfg)?),
            k,
        })
    }

    pub fn from_command(argv: Vec<String>, k: usize) -> Result<Self> {
        let name = argv.first().cloned().unwrap_or_default();
        ExternalProvider::spawn(&AdapterConfig::new(name, argv), k)
    }
}

impl CandidateProvider for ExternalProvider {
    fn candidates(&self, tokens: &[String], position: usize) -> Result<Vec<String>> {
        let raw = {
            let mut c = self.client.lock().unwrap_or_else(|p| p.into_inner());
            c.candidates(tokens, position)?
        };
        let mut seen = BTreeSet::new();
        Ok(raw.into_iter().filter(|c| seen.insert(c.clone())).take(self.k).collect())
    }
}

/// Start the providers a config names.
pub fn start_providers(specs: &[ProviderSpec], k: usize) -> Result<Vec<Box<dyn CandidateProvider>>> {
    specs
        .iter()
        .map(|s| -> Result<Box<dyn CandidateProvider>> {
            Ok(match s {
                ProviderSpec::Confusion => Box::new(ConfusionProvider),
                ProviderSpec::External(argv) => Box::new(ExternalProvider::from_command(argv.clone(), k)?),
            })
        })
        .collect()
}

/// Toy similarity metric: one-to-one token matching where an exact match
/// counts 1 and a confusion-set partner counts `partner_weight`. Behaves
/// like an embedding metric that barely notices a/an or this/these swaps.
#[derive(Debug, Clone)]
pub struct SoftOverlap {
    descriptor: MetricDescriptor,
    pub partner_weight: f64,
}

impl Default for SoftOverlap {
    fn default() -> Self {
        SoftOverlap {
            descriptor: MetricDescriptor {
                name: "soft-overlap-f".into(),
                higher_is_better: true,
                scope: Scope::Sample,
                needs: Needs {
                    source: false,
                    references: true,
                },
                multi_reference: false,
            },
            partner_weight: 0.99,
        }
    }
}

impl SoftOverlap {
    fn matched(&self, hyp: &[String], reference: &[String]) -> f64 {
        let mut used = vec![false; reference.len()];
        let mut open = Vec::new();
        let mut total = 0.0;
        for h in hyp {
            match (0..reference.len()).find(|&j| !used[j] && reference[j] == *h) {
                Some(j) => {
                    used[j] = true;
                    total += 1.0;
                }
                None => open.push(h),
            }
        }
        for h in open {
            let partners = ConfusionProvider::partners(h);
            if let Some(j) = (0..reference.len()).find(|&j| !used[j] && partners.contains(&reference[j])) {
                used[j] = true;
                total += self.partner_weight;
            }
        }
        total
    }
}

impl Metric for SoftOverlap {
    fn descriptor(&self) -> &MetricDescriptor {
        &self.descriptor
    }

    fn score(&self, hypothesis: &str, _source: Option<&str>, references: &[String]) -> Result<f64> {
        let reference = references
            .first()
            .ok_or_else(|| Error::invalid("soft-overlap needs a reference"))?;
        let h = annotate::tokens(hypothesis);
        let r = annotate::tokens(reference);
        if h.is_empty() || r.is_empty() {
            return Ok(0.0);
        }
        let m = self.matched(&h, &r);
        let (p, rc) = (m / h.len() as f64, m / r.len() as f64);
        Ok(if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::replay;
    use proptest::prelude::*;

    fn conf() -> Vec<&'static dyn CandidateProvider> {
        static C: ConfusionProvider = ConfusionProvider;
        vec![&C]
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(ConfusionProvider::partners("a"), vec!["an"]);
        assert_eq!(ConfusionProvider::partners("seven"), vec!["eight"]);
        assert!(ConfusionProvider::partners("office").is_empty());
        assert_eq!(ConfusionProvider::partners("This"), vec!["These"]);
        assert_eq!(ConfusionProvider::partners("44"), vec!["45"]);
        assert!(ConfusionProvider::partners("twenty").is_empty());
        let her = ConfusionProvider::partners("her");
        for w in ["him", "them", "his", "its", "their"] {
            assert!(her.contains(&w.to_string()), "{her:?}");
        }
    }

    #[test]
    fn provider_specs_parse() {
        assert_eq!("confusion".parse::<ProviderSpec>().unwrap(), ProviderSpec::Confusion);
        assert_eq!(
            "external:python3 mlm.py".parse::<ProviderSpec>().unwrap(),
            ProviderSpec::External(vec!["python3".into(), "mlm.py".into()])
        );
        assert!("external:".parse::<ProviderSpec>().is_err());
        assert!("mlm".parse::<ProviderSpec>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::new("m", 0.1).validate().is_ok());
        assert!(AttackConfig::new("m", 0.0).validate().is_err());
        let mut c = AttackConfig::new("m", 0.1);
        c.providers.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn article_swap_barely_moves_soft_overlap() {
        let s = Sample::new("t13", "a 44 year old female car driver");
        let m = SoftOverlap::default();
        let r = greedy_attack(&s, &AttackConfig::new("soft", 0.1), &m, &conf()).unwrap();
        assert_eq!(r.edits, vec![Edit::Replace { pos: 0, token: "an".into() }]);
        assert!(r.text.starts_with("an 44 year old"));
        assert!(r.reached && r.ratio >= 0.1);
        let change = (r.trajectory[0] - r.gold_score) / r.gold_score;
        assert!(change >= -0.01, "{change}");
        assert_eq!(replay(&s.gold, &r.edits, false).unwrap(), r.text);
    }

    #[test]
    fn zero_ratio_returns_immediately() {
        let s = Sample::new("x", "she went home");
        let mut c = AttackConfig::new("soft", 0.1);
        c.min_ratio = 0.0;
        let r = greedy_attack(&s, &c, &SoftOverlap::default(), &conf()).unwrap();
        assert!(r.edits.is_empty() && r.trajectory.is_empty());
        assert_eq!(r.text, s.gold);
    }

    #[test]
    fn single_token_without_candidates_errors() {
        let s = Sample::new("x", "office");
        let err = greedy_attack(&s, &AttackConfig::new("soft", 0.5), &SoftOverlap::default(), &conf()).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn lower_is_better_metrics_are_negated() {
        // lower is better: the attack should prefer deletions
        struct Length(MetricDescriptor);
        impl Metric for Length {
            fn descriptor(&self) -> &MetricDescriptor {
                &self.0
            }
            fn score(&self, h: &str, _: Option<&str>, _: &[String]) -> Result<f64> {
                Ok(annotate::tokens(h).len() as f64)
            }
        }
        let m = Length(MetricDescriptor {
            higher_is_better: false,
            ..SoftOverlap::default().descriptor().clone()
        });
        let s = Sample::new("x", "a cat sat on this mat");
        let r = greedy_attack(&s, &AttackConfig::new("len", 0.3), &m, &conf()).unwrap();
        assert_eq!(r.edits.len(), 2);
        assert!(r.edits.iter().all(|e| matches!(e, Edit::Delete { .. })));
        assert_eq!(r.trajectory, vec![-5.0, -4.0]);
    }

    #[test]
    fn filters_case_and_punct() {
        struct Fixed;
        impl CandidateProvider for Fixed {
            fn candidates(&self, _: &[String], _: usize) -> Result<Vec<String>> {
                Ok(vec!["Cat".into(), "...".into(), "dog".into(), "dog".into(), "big dog".into(), "ant".into()])
            }
        }
        let toks = vec!["cat".to_string()];
        assert_eq!(substitutes(&toks, 0, &[&Fixed]).unwrap(), vec!["ant", "dog"]);
    }

    proptest! {
        #[test]
        fn greedy_step_is_neighborhood_argmax(words in proptest::collection::vec(
            prop::sample::select(vec!["a", "the", "this", "he", "she", "is", "was", "seven", "cat", "ran", "old"]), 2..8)) {
            let gold = words.join(" ");
            let s = Sample::new("p", gold.clone());
            let m = SoftOverlap::default();
            let cfg = AttackConfig { max_iters: 1, ..AttackConfig::new("soft", 1.0) };
            let r = greedy_attack(&s, &cfg, &m, &conf()).unwrap();
            let toks = annotate::tokens(&gold);
            let mut best = f64::NEG_INFINITY;
            for pos in 0..toks.len() {
                let mut t = toks.clone();
                t.remove(pos);
                best = best.max(m.score(&annotate::detokenize(&t), None, std::slice::from_ref(&gold)).unwrap());
                for c in ConfusionProvider::partners(&toks[pos]) {
                    let mut t = toks.clone();
                    t[pos] = c;
                    best = best.max(m.score(&annotate::detokenize(&t), None, std::slice::from_ref(&gold)).unwrap());
                }
            }
            prop_assert_eq!(r.trajectory.len(), 1);
            prop_assert!((r.trajectory[0] - best).abs() < 1e-12);
        }

        #[test]
        fn attacks_are_deterministic_and_replayable(words in proptest::collection::vec(
            prop::sample::select(vec!["a", "this", "they", "were", "two", "cat", "ran", "."]), 1..10), min in 0.05f64..1.0) {
            let s = Sample::new("p", words.join(" "));
            let cfg = AttackConfig::new("soft", min);
            let m = SoftOverlap::default();
            let a = greedy_attack(&s, &cfg, &m, &conf());
            let b = greedy_attack(&s, &cfg, &m, &conf());
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a, &b);
                    prop_assert_eq!(a.trajectory.len(), a.edits.len());
                    prop_assert_eq!(replay(&s.gold, &a.edits, false).unwrap(), a.text.clone());
                    if a.reached { prop_assert!(a.ratio >= min); }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "nondeterministic outcome"),
            }
        }
    }
}

//! Test plans, the rank-based protocol and report files.
//!
//! A plan scores the gold set once per metric, then every noise level under
//! every seed. Scores are averaged over seeds per level, and a metric passes
//! a noise kind when its mean score strictly decreases from gold through
//! each level in order of increasing noise-ratio.
//!
//! Plan files are JSON lines, one record per line, tagged by `"type"`:
//!
//! ```text
//! {"type":"corpus","path":"corpus.jsonl","task":"summarization","annotations":"ann.jsonl"}
//! {"type":"seeds","count":5,"master_seed":42}
//! {"type":"noise","kind":"truncation","levels":[0.1,0.2,0.3]}
//! {"type":"noise","kind":"token_drop","calibrate":{"min_gap":0.05}}
//! {"type":"metric","name":"rougeL"}
//! {"type":"adapter","name":"my-metric","command":["python3","metric.py"]}
//! {"type":"settings","tie_tol":1e-9,"parallelism":4}
//! ```
//!
//! Relative paths are resolved against the plan's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterConfig, ScoreItem, Scorer};
use crate::annotate::{self, AnnotatedText, AnnotationSource};
use crate::corpus::{self, Corpus, Sample, Task};
use crate::distance;
use crate::exec::Exec;
use crate::metrics::{self, NoiseLabel, ScoreRecord};
use crate::perturb::{
    self, collect_ngrams, CandidateProvider, DonorPool, Edit, LevelDomain, NgramTable, NoiseKind, NoiseOptions, NoiseSpec,
    NoisedHypothesis, PerturbContext,
};
use crate::seed::{content_hash, derive_seed, SeedPart};
use crate::{Error, Result, TOOL_VERSION};

pub const DEFAULT_TIE_TOL: f64 = 1e-9;
pub const DEFAULT_SEEDS: u32 = 5;
pub const DEFAULT_MIN_GAP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRef {
    pub path: PathBuf,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSettings {
    #[serde(default = "default_seed_count")]
    pub count: u32,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_seed_count() -> u32 {
    DEFAULT_SEEDS
}

impl Default for SeedSettings {
    fn default() -> Self {
        SeedSettings {
            count: DEFAULT_SEEDS,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    /// Levels to try, in order; defaults depend on the kind's level domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<f64>>,
    #[serde(default = "default_min_gap")]
    pub min_gap: f64,
}

fn default_min_gap() -> f64 {
    DEFAULT_MIN_GAP
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelGrid {
    Explicit(Vec<f64>),
    Calibrate(CalibrateSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    pub kind: NoiseKind,
    pub grid: LevelGrid,
    pub options: NoiseOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricRef {
    Builtin(String),
    Adapter(AdapterConfig),
}

impl MetricRef {
    pub fn name(&self) -> &str {
        match self {
            MetricRef::Builtin(n) => n,
            MetricRef::Adapter(c) => &c.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default = "default_tie_tol")]
    pub tie_tol: f64,
    /// Worker threads; 0 picks the default, 1 runs sequentially.
    #[serde(default)]
    pub parallelism: usize,
}

fn default_tie_tol() -> f64 {
    DEFAULT_TIE_TOL
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            tie_tol: DEFAULT_TIE_TOL,
            parallelism: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestPlan {
    pub corpus: CorpusRef,
    pub seeds: SeedSettings,
    pub noises: Vec<NoisePlan>,
    pub metrics: Vec<MetricRef>,
    pub settings: Settings,
    /// SHA-256 of the plan text.
    pub plan_hash: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseRecord {
    kind: NoiseKind,
    #[serde(default)]
    levels: Option<Vec<f64>>,
    #[serde(default)]
    calibrate: Option<CalibrateField>,
    #[serde(default)]
    options: NoiseOptions,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CalibrateField {
    Flag(bool),
    Spec(CalibrateSpec),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricRecord {
    name: String,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum PlanRecord {
    Corpus(CorpusRef),
    Seeds(SeedSettings),
    Noise(NoiseRecord),
    Metric(MetricRecord),
    Adapter(AdapterConfig),
    Settings(Settings),
}

impl TestPlan {
    /// Parse plan text; `base` resolves relative paths, `origin` names the
    /// plan in error messages.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<TestPlan> {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut corpus = None;
        let mut seeds = None;
        let mut settings = None;
        let mut noises = Vec::new();
        let mut metrics = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PlanRecord = serde_json::from_str(line).map_err(|e| perr(lineno, e.to_string()))?;
            match rec {
                PlanRecord::Corpus(mut c) => {
                    if corpus.is_some() {
                        return Err(perr(lineno, "more than one corpus record".into()));
                    }
                    c.path = base.join(&c.path);
                    c.annotations = c.annotations.map(|a| base.join(a));
                    corpus = Some(c);
                }
                PlanRecord::Seeds(s) => {
                    if seeds.replace(s).is_some() {
                        return Err(perr(lineno, "more than one seeds record".into()));
                    }
                }
                PlanRecord::Settings(s) => {
                    if settings.replace(s).is_some() {
                        return Err(perr(lineno, "more than one settings record".into()));
                    }
                }
                PlanRecord::Noise(r) => {
                    let grid = match (r.levels, r.calibrate) {
                        (Some(levels), None) => {
                            if levels.is_empty() {
                                return Err(perr(lineno, "empty level grid".into()));
                            }
                            for &l in &levels {
                                r.kind.check_level(l).map_err(|e| perr(lineno, e.to_string()))?;
                            }
                            LevelGrid::Explicit(levels)
                        }
                        (None, Some(CalibrateField::Flag(true))) => LevelGrid::Calibrate(CalibrateSpec {
                            candidates: None,
                            min_gap: DEFAULT_MIN_GAP,
                        }),
                        (None, Some(CalibrateField::Spec(spec))) => LevelGrid::Calibrate(spec),
                        _ => {
                            return Err(perr(lineno, "noise record needs exactly one of levels, calibrate".into()));
                        }
                    };
                    noises.push(NoisePlan {
                        kind: r.kind,
                        grid,
                        options: r.options,
                    });
                }
                PlanRecord::Metric(m) => {
                    metrics::builtin(&m.name).map_err(|e| perr(lineno, e.to_string()))?;
                    metrics.push(MetricRef::Builtin(m.name));
                }
                PlanRecord::Adapter(a) => {
                    a.validate().map_err(|e| perr(lineno, e.to_string()))?;
                    metrics.push(MetricRef::Adapter(a));
                }
            }
        }
        let corpus = corpus.ok_or_else(|| perr(0, "no corpus record".into()))?;
        let seeds = seeds.unwrap_or_default();
        if seeds.count == 0 {
            return Err(perr(0, "seed count must be at least 1".into()));
        }
        if noises.is_empty() {
            return Err(perr(0, "no noise records".into()));
        }
        if metrics.is_empty() {
            return Err(perr(0, "no metric or adapter records".into()));
        }
        let mut names = HashSet::new();
        for m in &metrics {
            if !names.insert(m.name().to_string()) {
                return Err(perr(0, format!("metric {:?} listed twice", m.name())));
            }
        }
        let settings = settings.unwrap_or_default();
        if !(settings.tie_tol >= 0.0 && settings.tie_tol.is_finite()) {
            return Err(perr(0, "tie_tol must be a non-negative number".into()));
        }
        Ok(TestPlan {
            corpus,
            seeds,
            noises,
            metrics,
            settings,
            plan_hash: content_hash(text.as_bytes()),
        })
    }

    pub fn load(path: &Path) -> Result<TestPlan> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading plan {}", path.display()), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        TestPlan::parse(&text, base, path)
    }
}

/// Everything a run needs besides the plan: corpus, annotations and shared
/// perturbation inputs.
pub struct Prepared {
    pub corpus: Corpus,
    pub annotations: BTreeMap<String, AnnotatedText>,
    pub donor_pool: DonorPool,
    /// Sorted distinct gold tokens.
    pub vocab: Vec<String>,
    /// Substitute source for bert_diverge.
    pub candidates: Option<Arc<dyn CandidateProvider>>,
    ngrams: BTreeMap<usize, NgramTable>,
}

impl std::fmt::Debug for Prepared {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prepared")
            .field("samples", &self.corpus.len())
            .field("vocab", &self.vocab.len())
            .field("candidates", &self.candidates.is_some())
            .finish()
    }
}

impl Prepared {
    pub fn new(corpus: Corpus, source: &AnnotationSource) -> Result<Prepared> {
        let annotations = annotate::annotate_corpus(&corpus, source)?;
        let donor_pool = DonorPool::from_corpus(&corpus);
        let mut vocab: Vec<String> = annotations
            .values()
            .flat_map(|a| a.tokens.iter().cloned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        vocab.shrink_to_fit();
        Ok(Prepared {
            corpus,
            annotations,
            donor_pool,
            vocab,
            candidates: None,
            ngrams: BTreeMap::new(),
        })
    }

    pub fn load(corpus: &CorpusRef) -> Result<Prepared> {
        let c = corpus::load_corpus(&corpus.path, corpus.task)?;
        let source = match &corpus.annotations {
            Some(p) => AnnotationSource::Merge(annotate::load_annotation_file(p)?),
            None => AnnotationSource::Rules,
        };
        Prepared::new(c, &source)
    }

    pub fn ensure_ngrams(&mut self, n: usize) {
        if !self.ngrams.contains_key(&n) {
            let table = collect_ngrams(&self.corpus, n);
            self.ngrams.insert(n, table);
        }
    }

    fn context(&self, options: &NoiseOptions) -> PerturbContext<'_> {
        PerturbContext {
            donor: Some(&self.corpus),
            donor_pool: Some(&self.donor_pool),
            vocab: Some(&self.vocab),
            ngrams: self.ngrams.get(&options.n.unwrap_or(4)),
            candidates: self.candidates.as_deref(),
        }
    }
}

/// Seed of run `run` under `master`.
pub fn run_seed(master: u64, run: u32) -> u64 {
    derive_seed(&[SeedPart::U64(master), SeedPart::Str("run"), SeedPart::U64(run as u64)])
}

/// Seed for one sample of one noised set.
pub fn sample_seed(run_seed: u64, sample_id: &str, kind: NoiseKind, level_index: usize) -> u64 {
    derive_seed(&[
        SeedPart::U64(run_seed),
        SeedPart::Str(sample_id),
        SeedPart::Str(kind.as_str()),
        SeedPart::U64(level_index as u64),
    ])
}

/// One noised copy of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedSet {
    pub kind: NoiseKind,
    pub level: f64,
    /// Rank among the kind's levels by measured noise-ratio; gold is 0.
    pub level_index: usize,
    pub run: u32,
    pub run_seed: u64,
    pub hypotheses: Vec<NoisedHypothesis>,
    pub ratios: distance::NoiseRatioReport,
}

impl NoisedSet {
    pub fn all_skipped(&self) -> bool {
        self.hypotheses.iter().all(|h| h.skipped)
    }
}

/// Perturb every sample with `kind` at `level`; `grid_index` feeds the
/// per-sample seed.
pub fn noise_corpus(
    prepared: &Prepared,
    kind: NoiseKind,
    level: f64,
    options: &NoiseOptions,
    grid_index: usize,
    run: u32,
    master_seed: u64,
    exec: &Exec,
) -> Result<NoisedSet> {
    let rs = run_seed(master_seed, run);
    let ctx = prepared.context(options);
    let hyps = exec.try_map(&prepared.corpus.samples, |s: &Sample| {
        let at = &prepared.annotations[&s.id];
        let spec = NoiseSpec {
            kind,
            level,
            seed: sample_seed(rs, &s.id, kind, grid_index),
            options: options.clone(),
        };
        perturb::perturb(s, at, &spec, &ctx).map_err(|e| match e {
            Error::Noise { kind, message } => Error::Noise {
                kind,
                message: format!("sample {:?}: {message}", s.id),
            },
            other => other,
        })
    })?;
    let gold: Vec<(&str, &str)> = prepared.corpus.samples.iter().map(|s| (s.id.as_str(), s.gold.as_str())).collect();
    let noised: Vec<(&str, &str)> = hyps.iter().map(|h| (h.sample_id.as_str(), h.text.as_str())).collect();
    let ratios = distance::noise_ratio(&gold, &noised, Some(kind))?;
    Ok(NoisedSet {
        kind,
        level,
        level_index: grid_index,
        run,
        run_seed: rs,
        hypotheses: hyps,
        ratios,
    })
}

fn default_candidates(kind: NoiseKind) -> Vec<f64> {
    match kind.level_domain() {
        LevelDomain::OpenFraction => (1..20).map(|i| i as f64 * 0.05).collect(),
        LevelDomain::Fraction => (1..=20).map(|i| i as f64 * 0.05).collect(),
        LevelDomain::Count => (1..=10).map(f64::from).collect(),
        LevelDomain::Unused => vec![0.0],
    }
}

/// Calibration sweep: measure each candidate on run 0 and keep levels whose
/// noise-ratio is at least `min_gap` above the last kept one (gold counts as
/// ratio 0). Returns `(level, measured ratio)` pairs.
pub fn calibrate(
    prepared: &Prepared,
    noise: &NoisePlan,
    spec: &CalibrateSpec,
    master_seed: u64,
    exec: &Exec,
) -> Result<Vec<(f64, f64)>> {
    let candidates = spec.candidates.clone().unwrap_or_else(|| default_candidates(noise.kind));
    if noise.kind.level_domain() == LevelDomain::Unused {
        return Ok(candidates.into_iter().take(1).map(|l| (l, f64::NAN)).collect());
    }
    let mut kept = Vec::new();
    let mut last = 0.0;
    for (i, &level) in candidates.iter().enumerate() {
        noise.kind.check_level(level)?;
        let set = noise_corpus(prepared, noise.kind, level, &noise.options, i + 1, 0, master_seed, exec)?;
        let r = set.ratios.mean_ratio;
        log::debug!("calibrate {} level {level}: ratio {r:.4}", noise.kind);
        if r >= last + spec.min_gap - 1e-12 {
            kept.push((level, r));
            last = r;
        }
    }
    if kept.is_empty() {
        log::warn!("calibration for {} kept no level (no candidate reached ratio {})", noise.kind, spec.min_gap);
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level_index: usize,
    /// `None` for gold.
    pub level: Option<f64>,
    pub noise_ratio: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub metric: String,
    pub kind: Option<NoiseKind>,
    /// Gold first, then each level in order.
    pub levels: Vec<LevelSummary>,
    pub verdict: Verdict,
    /// Index into `levels` of the first level that failed to score lower
    /// than its predecessor.
    pub first_violation: Option<usize>,
}

/// Rank-based verdict: PASS iff the mean strictly decreases (by more than
/// `tie_tol`) from gold through every level in order.
pub fn rank_verdict(gold: &ScoreRecord, levels: &[ScoreRecord], tie_tol: f64) -> TestVerdict {
    let mut rows = vec![LevelSummary {
        level_index: 0,
        level: None,
        noise_ratio: gold.noise_ratio,
        mean: gold.mean,
        std: gold.std,
    }];
    let mut kind = None;
    for (i, r) in levels.iter().enumerate() {
        let level = match &r.noise {
            NoiseLabel::Noised { kind: k, level, .. } => {
                kind = Some(*k);
                Some(*level)
            }
            NoiseLabel::Gold => None,
        };
        rows.push(LevelSummary {
            level_index: i + 1,
            level,
            noise_ratio: r.noise_ratio,
            mean: r.mean,
            std: r.std,
        });
    }
    let first_violation = (1..rows.len()).find(|&i| !(rows[i - 1].mean - rows[i].mean > tie_tol));
    TestVerdict {
        metric: gold.metric.clone(),
        kind,
        levels: rows,
        verdict: if first_violation.is_some() { Verdict::Fail } else { Verdict::Pass },
        first_violation,
    }
}

/// Combine per-seed records of one (metric, kind, level): mean of run means
/// and their population standard deviation.
pub fn aggregate_seeds(records: &[ScoreRecord]) -> Result<ScoreRecord> {
    let first = records.first().ok_or_else(|| Error::invalid("no records to aggregate"))?;
    for r in records {
        if r.metric != first.metric || r.noise != first.noise {
            return Err(Error::invalid("records to aggregate differ in metric or noise"));
        }
    }
    let means: Vec<f64> = records.iter().map(|r| r.mean).collect();
    let mean = metrics::mean(&means);
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / means.len() as f64;
    let per_sample = match records.iter().map(|r| r.per_sample.as_ref()).collect::<Option<Vec<_>>>() {
        Some(all) if all.iter().all(|p| p.len() == all[0].len()) => Some(
            (0..all[0].len())
                .map(|i| all.iter().map(|p| p[i]).sum::<f64>() / all.len() as f64)
                .collect(),
        ),
        _ => None,
    };
    let ratios: Vec<f64> = records.iter().map(|r| r.noise_ratio).collect();
    Ok(ScoreRecord {
        metric: first.metric.clone(),
        noise: first.noise.clone(),
        seed: None,
        per_sample,
        mean,
        std: var.sqrt(),
        noise_ratio: metrics::mean(&ratios),
    })
}

/// Levels of one kind, after calibration and ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct KindLevels {
    pub kind: NoiseKind,
    pub options: NoiseOptions,
    /// Ordered by measured noise-ratio; `sets[i]` holds one set per run.
    pub levels: Vec<(f64, Vec<NoisedSet>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub plan_hash: String,
    pub master_seed: u64,
    /// Gold records (one per metric) followed by per-seed noised records.
    pub records: Vec<ScoreRecord>,
    /// Gold plus seed-aggregated level records.
    pub aggregates: Vec<ScoreRecord>,
    pub verdicts: Vec<TestVerdict>,
    pub kinds: Vec<KindLevels>,
}

fn score_items(samples: &[Sample], texts: impl Iterator<Item = String>) -> Vec<ScoreItem> {
    samples
        .iter()
        .zip(texts)
        .map(|(s, h)| ScoreItem {
            id: s.id.clone(),
            hypothesis: h,
            source: s.source.clone(),
            references: s.references.clone(),
        })
        .collect()
}

/// Build every noised set of the plan.
pub fn build_noised_sets(plan: &TestPlan, prepared: &mut Prepared, exec: &Exec) -> Result<Vec<KindLevels>> {
    let master = plan.seeds.master_seed;
    let mut out = Vec::new();
    for noise in &plan.noises {
        if noise.kind == NoiseKind::FreqNgram {
            prepared.ensure_ngrams(noise.options.n.unwrap_or(4));
        }
        let grid: Vec<f64> = match &noise.grid {
            LevelGrid::Explicit(levels) => levels.clone(),
            LevelGrid::Calibrate(spec) => calibrate(prepared, noise, spec, master, exec)?
                .into_iter()
                .map(|(l, _)| l)
                .collect(),
        };
        let jobs: Vec<(usize, f64, u32)> = grid
            .iter()
            .enumerate()
            .flat_map(|(i, &l)| (0..plan.seeds.count).map(move |r| (i + 1, l, r)))
            .collect();
        let prep: &Prepared = prepared;
        let sets = exec.try_map(&jobs, |&(gi, level, run)| {
            noise_corpus(prep, noise.kind, level, &noise.options, gi, run, master, &Exec::Sequential)
        })?;
        let mut levels: Vec<(f64, Vec<NoisedSet>)> = Vec::new();
        for chunk in sets.chunks(plan.seeds.count as usize) {
            let level = chunk[0].level;
            if chunk.iter().all(NoisedSet::all_skipped) {
                log::warn!("{} level {level}: no sample had an eligible target; level dropped", noise.kind);
                continue;
            }
            levels.push((level, chunk.to_vec()));
        }
        let ratio = |sets: &[NoisedSet]| metrics::mean(&sets.iter().map(|s| s.ratios.mean_ratio).collect::<Vec<_>>());
        let measured: Vec<f64> = levels.iter().map(|(_, s)| ratio(s)).collect();
        if measured.windows(2).any(|w| w[1] <= w[0]) {
            log::warn!(
                "{}: measured noise-ratios {measured:?} are not strictly increasing in grid order; levels reordered by ratio",
                noise.kind
            );
        }
        levels.sort_by(|a, b| ratio(&a.1).total_cmp(&ratio(&b.1)));
        for (rank, (_, sets)) in levels.iter_mut().enumerate() {
            for s in sets.iter_mut() {
                s.level_index = rank + 1;
            }
        }
        out.push(KindLevels {
            kind: noise.kind,
            options: noise.options.clone(),
            levels,
        });
    }
    Ok(out)
}

/// Score and judge prepared noised sets with the given scorers.
pub fn score_plan(
    prepared: &Prepared,
    kinds: &[KindLevels],
    scorers: &[Scorer],
    tie_tol: f64,
    exec: &Exec,
) -> Result<(Vec<ScoreRecord>, Vec<ScoreRecord>, Vec<TestVerdict>)> {
    let samples = &prepared.corpus.samples;
    let gold_items = score_items(samples, samples.iter().map(|s| s.gold.clone()));
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    let mut verdicts = Vec::new();
    let sets: Vec<&NoisedSet> = kinds.iter().flat_map(|k| k.levels.iter().flat_map(|(_, s)| s.iter())).collect();
    for scorer in scorers {
        let name = scorer.name().to_string();
        let g = scorer
            .score_set(&gold_items, exec)
            .map_err(|e| context(e, &format!("scoring gold with {name}")))?;
        let gold = ScoreRecord {
            metric: name.clone(),
            noise: NoiseLabel::Gold,
            seed: None,
            per_sample: g.per_sample,
            mean: g.mean,
            std: 0.0,
            noise_ratio: 0.0,
        };
        records.push(gold.clone());
        aggregates.push(gold.clone());
        let scored = exec.try_map(&sets, |set| {
            let items = score_items(samples, set.hypotheses.iter().map(|h| h.text.clone()));
            let s = scorer.score_set(&items, &Exec::Sequential).map_err(|e| {
                context(
                    e,
                    &format!("scoring {} level {} run {} with {name}", set.kind, set.level, set.run),
                )
            })?;
            Ok::<_, Error>(ScoreRecord {
                metric: name.clone(),
                noise: NoiseLabel::Noised {
                    kind: set.kind,
                    level: set.level,
                    level_index: set.level_index,
                },
                seed: Some(set.run),
                per_sample: s.per_sample,
                mean: s.mean,
                std: 0.0,
                noise_ratio: set.ratios.mean_ratio,
            })
        })?;
        let mut at = 0;
        for k in kinds {
            let mut level_aggs = Vec::new();
            for (_, sets) in &k.levels {
                let recs = &scored[at..at + sets.len()];
                at += sets.len();
                level_aggs.push(aggregate_seeds(recs)?);
            }
            let mut v = rank_verdict(&gold, &level_aggs, tie_tol);
            v.kind = Some(k.kind);
            verdicts.push(v);
            aggregates.extend(level_aggs);
        }
        records.extend(scored);
    }
    Ok((records, aggregates, verdicts))
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::Adapter { adapter, message } => Error::Adapter {
            adapter,
            message: format!("{what}: {message}"),
        },
        other => other,
    }
}

/// Rebuild seed aggregates and verdicts from raw per-seed records, as
/// written to records.jsonl. Levels are ordered by their stored index.
pub fn verdicts_from_records(records: &[ScoreRecord], tie_tol: f64) -> Result<(Vec<ScoreRecord>, Vec<TestVerdict>)> {
    let mut metrics_order: Vec<&str> = Vec::new();
    let mut gold: BTreeMap<&str, &ScoreRecord> = BTreeMap::new();
    // metric -> kind -> level_index -> per-seed records
    let mut groups: BTreeMap<&str, BTreeMap<NoiseKind, BTreeMap<usize, Vec<ScoreRecord>>>> = BTreeMap::new();
    for r in records {
        if !metrics_order.contains(&r.metric.as_str()) {
            metrics_order.push(&r.metric);
        }
        match &r.noise {
            NoiseLabel::Gold => {
                if gold.insert(&r.metric, r).is_some() {
                    return Err(Error::invalid(format!("metric {} has more than one gold record", r.metric)));
                }
            }
            NoiseLabel::Noised { kind, level_index, .. } => groups
                .entry(&r.metric)
                .or_default()
                .entry(*kind)
                .or_default()
                .entry(*level_index)
                .or_default()
                .push(r.clone()),
        }
    }
    let mut aggregates = Vec::new();
    let mut verdicts = Vec::new();
    for m in metrics_order {
        let g = *gold
            .get(m)
            .ok_or_else(|| Error::invalid(format!("metric {m} has no gold record")))?;
        aggregates.push(g.clone());
        for (kind, levels) in groups.remove(m).unwrap_or_default() {
            let aggs = levels.values().map(|recs| aggregate_seeds(recs)).collect::<Result<Vec<_>>>()?;
            let mut v = rank_verdict(g, &aggs, tie_tol);
            v.kind = Some(kind);
            verdicts.push(v);
            aggregates.extend(aggs);
        }
    }
    Ok((aggregates, verdicts))
}

/// Start the scorers a plan names.
pub fn start_scorers(plan: &TestPlan) -> Result<Vec<Scorer>> {
    plan.metrics
        .iter()
        .map(|m| match m {
            MetricRef::Builtin(n) => Scorer::builtin(n),
            MetricRef::Adapter(cfg) => Scorer::adapter(cfg),
        })
        .collect()
}

/// Execute a plan end to end.
pub fn run_plan(plan: &TestPlan, exec: &Exec) -> Result<RunOutput> {
    let mut prepared = Prepared::load(&plan.corpus)?;
    exec.install(|| {
        let kinds = build_noised_sets(plan, &mut prepared, exec)?;
        let scorers = start_scorers(plan)?;
        let (records, aggregates, verdicts) = score_plan(&prepared, &kinds, &scorers, plan.settings.tie_tol, exec)?;
        Ok(RunOutput {
            plan_hash: plan.plan_hash.clone(),
            master_seed: plan.seeds.master_seed,
            records,
            aggregates,
            verdicts,
            kinds,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub master_seed: u64,
    pub plan_hash: String,
}

impl Provenance {
    pub fn new(master_seed: u64, plan_hash: &str) -> Self {
        Provenance {
            tool: TOOL_VERSION.to_string(),
            master_seed,
            plan_hash: plan_hash.to_string(),
        }
    }

    /// JSON header line for line-record files.
    pub fn header_line(&self) -> String {
        serde_json::json!({ "provenance": self }).to_string()
    }
}

#[derive(Serialize)]
struct NoisedLine<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<&'a str>,
    references: &'a [String],
    gold: &'a str,
    hypothesis: &'a str,
    spec: &'a NoiseSpec,
    noise_ratio: f64,
    skipped: bool,
    edits: &'a [Edit],
}

/// Line-record body of a noised corpus, with a provenance header.
pub fn noised_corpus_lines(set: &NoisedSet, corpus: &Corpus, prov: &Provenance) -> String {
    let mut out = prov.header_line();
    out.push('\n');
    for (h, r) in set.hypotheses.iter().zip(&set.ratios.per_sample) {
        let s = corpus.get(&h.sample_id).expect("noised ids come from the corpus");
        let line = NoisedLine {
            id: &h.sample_id,
            source: s.source.as_deref(),
            references: &s.references,
            gold: &s.gold,
            hypothesis: &h.text,
            spec: &h.spec,
            noise_ratio: r.ratio,
            skipped: h.skipped,
            edits: &h.edits,
        };
        out.push_str(&serde_json::to_string(&line).expect("noised line serializes"));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(body).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn jsonl<T: Serialize>(prov: &Provenance, rows: &[T]) -> String {
    let mut out = prov.header_line();
    out.push('\n');
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Render the plot table: one row per metric x kind x level (gold as level
/// 0), with a one-std band and the verdict.
pub fn plot_csv(verdicts: &[TestVerdict], prov: &Provenance) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "metric", "kind", "level_index", "level", "noise_ratio", "mean", "std", "lower", "upper", "verdict", "violation",
    ])
    .map_err(csv_err)?;
    for v in verdicts {
        let kind = v.kind.map(|k| k.as_str()).unwrap_or("");
        let verdict = match v.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        for (i, l) in v.levels.iter().enumerate() {
            wtr.write_record([
                v.metric.clone(),
                kind.to_string(),
                l.level_index.to_string(),
                l.level.map(|x| x.to_string()).unwrap_or_default(),
                l.noise_ratio.to_string(),
                l.mean.to_string(),
                l.std.to_string(),
                (l.mean - l.std).to_string(),
                (l.mean + l.std).to_string(),
                verdict.to_string(),
                (v.first_violation == Some(i)).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let body = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = format!(
        "# tool={} master_seed={} plan_hash={}\n",
        prov.tool, prov.master_seed, prov.plan_hash
    );
    out.push_str(&String::from_utf8(body).expect("csv is utf-8"));
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

/// Write records.jsonl, summary.jsonl, verdicts.jsonl and plot_data.csv
/// under `out_dir`.
pub fn emit_report(
    verdicts: &[TestVerdict],
    records: &[ScoreRecord],
    aggregates: &[ScoreRecord],
    prov: &Provenance,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    write_file(&out_dir.join("records.jsonl"), jsonl(prov, records).as_bytes())?;
    write_file(&out_dir.join("summary.jsonl"), jsonl(prov, aggregates).as_bytes())?;
    write_file(&out_dir.join("verdicts.jsonl"), jsonl(prov, verdicts).as_bytes())?;
    write_file(&out_dir.join("plot_data.csv"), plot_csv(verdicts, prov)?.as_bytes())?;
    Ok(())
}

/// File name of a noised corpus.
pub fn noised_file_name(kind: NoiseKind, level_index: usize, run: u32) -> String {
    format!("{kind}_L{level_index}_S{run}.jsonl")
}

/// Write a full run: report files plus every noised corpus under `noised/`.
pub fn write_run(output: &RunOutput, corpus: &Corpus, out_dir: &Path) -> Result<()> {
    let prov = Provenance::new(output.master_seed, &output.plan_hash);
    emit_report(&output.verdicts, &output.records, &output.aggregates, &prov, out_dir)?;
    let dir = out_dir.join("noised");
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for k in &output.kinds {
        for (_, sets) in &k.levels {
            for set in sets {
                let name = noised_file_name(set.kind, set.level_index, set.run);
                write_file(&dir.join(name), noised_corpus_lines(set, corpus, &prov).as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Read a line-record file written by [`emit_report`], skipping the
/// provenance header.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(Option<Provenance>, Vec<T>)> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut prov = None;
    let mut rows = Vec::new();
    for (n, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |e: serde_json::Error| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        };
        if n == 0 {
            let v: serde_json::Value = serde_json::from_str(line).map_err(perr)?;
            if let Some(p) = v.get("provenance") {
                prov = Some(serde_json::from_value(p.clone()).map_err(perr)?);
                continue;
            }
        }
        rows.push(serde_json::from_str(line).map_err(perr)?);
    }
    Ok((prov, rows))
}

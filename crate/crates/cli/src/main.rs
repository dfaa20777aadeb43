//! `stresslab` command-line front end.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad input files, bad
//! flags, unknown names), 2 on runtime failures such as a crashed adapter.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stresslab_core::adapter::{AdapterConfig, Scorer};
use stresslab_core::annotate::{self, AnnotationRecord};
use stresslab_core::attack::{self, AttackConfig, ProviderSpec, SoftOverlap};
use stresslab_core::corpus::{self, Corpus, Sample, Task};
use stresslab_core::distance;
use stresslab_core::exec::Exec;
use stresslab_core::harness::{self, Prepared, Provenance, TestPlan, TestVerdict, Verdict};
use stresslab_core::metrics::{Metric, ScoreRecord};
use stresslab_core::perturb::{self, CandidateProvider, NoiseKind, NoiseOptions};
use stresslab_core::seed::content_hash;
use stresslab_core::{Error, Result};

use config::GlobalConfig;

#[derive(Parser, Debug)]
#[command(name = "stresslab", version, about = "Stress tests for text-generation evaluation metrics")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Shared config file (line records).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file and the plan.
    #[arg(long, global = true, env = "STRESSLAB_SEED")]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corpus utilities.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Tokenize and tag a corpus; writes annotations.jsonl.
    Annotate(AnnotateArgs),
    /// Apply one noise kind at one level; writes <kind>.jsonl.
    Perturb(PerturbArgs),
    /// Noise-ratio of a noised file against its gold corpus.
    NoiseRatio(NoiseRatioArgs),
    /// Execute a test plan; writes reports and noised corpora.
    Run(RunArgs),
    /// Greedy adversarial search; writes attack.jsonl.
    Attack(AttackArgs),
    /// Recompute verdicts from a run's records.jsonl.
    Report(ReportArgs),
    /// Most frequent n-grams of the gold set.
    Ngrams(NgramArgs),
}

#[derive(Subcommand, Debug)]
enum CorpusCmd {
    /// Check a corpus file and print a summary.
    Validate {
        path: PathBuf,
        #[arg(long)]
        task: Task,
    },
    /// Clean raw WikiText paragraphs (blank-line separated) into a corpus.
    CleanWikitext {
        input: PathBuf,
        #[arg(long, default_value_t = corpus::WIKITEXT_MAX_LEN)]
        max_len: usize,
    },
}

#[derive(Args, Debug)]
struct CorpusArgs {
    corpus: PathBuf,
    #[arg(long)]
    task: Task,
    /// Annotation file overlaid on the built-in tagger.
    #[arg(long)]
    annotations: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[command(flatten)]
    input: CorpusArgs,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[command(flatten)]
    input: CorpusArgs,
    #[arg(long)]
    kind: NoiseKind,
    #[arg(long, default_value_t = 0.0)]
    level: f64,
    /// Noise option as key=value, repeatable.
    #[arg(long = "opt", value_name = "KEY=VALUE")]
    options: Vec<String>,
    /// Candidate provider for bert_diverge (external:<cmd>).
    #[arg(long)]
    candidates: Option<ProviderSpec>,
}

#[derive(Args, Debug)]
struct NoiseRatioArgs {
    gold: PathBuf,
    /// Noised file with `id` and `hypothesis` fields.
    noised: PathBuf,
    #[arg(long)]
    task: Task,
    /// Noise kind, for switching halving.
    #[arg(long)]
    kind: Option<NoiseKind>,
}

#[derive(Args, Debug)]
struct RunArgs {
    plan: PathBuf,
}

#[derive(Args, Debug)]
struct AttackArgs {
    corpus: PathBuf,
    #[arg(long)]
    task: Task,
    /// Built-in metric name or soft-overlap-f.
    #[arg(long, conflicts_with = "adapter")]
    metric: Option<String>,
    /// Adapter command line for an external target metric.
    #[arg(long)]
    adapter: Option<String>,
    #[arg(long)]
    min_ratio: f64,
    /// Comma-separated: confusion, external:<cmd>.
    #[arg(long, default_value = "confusion")]
    providers: String,
    #[arg(long, default_value_t = attack::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Candidates kept per external provider call.
    #[arg(long, default_value_t = attack::DEFAULT_EXTERNAL_K)]
    k: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding records.jsonl.
    run_dir: PathBuf,
    #[arg(long, default_value_t = harness::DEFAULT_TIE_TOL)]
    tie_tol: f64,
}

#[derive(Args, Debug)]
struct NgramArgs {
    corpus: PathBuf,
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    top: usize,
}

/// Resolved global settings.
struct Env {
    seed: Option<u64>,
    /// Thread count from the flag or config file, if given.
    threads: Option<usize>,
    exec: Exec,
    out: PathBuf,
}

impl Env {
    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        Ok(&self.out)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        context: path.display().to_string(),
        source: e,
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| io_err(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn load_input(args: &CorpusArgs) -> Result<Prepared> {
    harness::Prepared::load(&harness::CorpusRef {
        path: args.corpus.clone(),
        task: args.task,
        annotations: args.annotations.clone(),
    })
}

fn header(seed: u64, what: &serde_json::Value) -> Provenance {
    Provenance::new(seed, &content_hash(what.to_string().as_bytes()))
}

fn cmd_corpus(cmd: CorpusCmd, env: &Env) -> Result<()> {
    match cmd {
        CorpusCmd::Validate { path, task } => {
            let c = corpus::load_corpus(&path, task)?;
            let tokens: usize = c.samples.iter().map(|s| annotate::tokens(&s.gold).len()).sum();
            let with_source = c.samples.iter().filter(|s| s.source.is_some()).count();
            println!(
                "{}: {} samples, {} gold tokens, {} with source, task {}",
                path.display(),
                c.len(),
                tokens,
                with_source,
                task
            );
            Ok(())
        }
        CorpusCmd::CleanWikitext { input, max_len } => {
            let raw = fs::read_to_string(&input).map_err(|e| io_err(&input, e))?;
            let mut samples = Vec::new();
            for (i, para) in raw.split("\n\n").filter(|p| !p.trim().is_empty()).enumerate() {
                match corpus::clean_wikitext(para, max_len) {
                    Ok(text) => samples.push(Sample::new(format!("wiki-{i}"), text)),
                    Err(e) => log::warn!("paragraph {i} skipped: {e}"),
                }
            }
            let mut c = Corpus::new(Task::OpenEnded, samples)?;
            let prov = header(env.seed.unwrap_or(0), &json!({"clean_wikitext": content_hash(raw.as_bytes()), "max_len": max_len}));
            c.metadata.insert("tool".into(), prov.tool);
            c.metadata.insert("plan_hash".into(), prov.plan_hash);
            c.metadata.insert("master_seed".into(), prov.master_seed.to_string());
            let path = env.out_dir()?.join("corpus.jsonl");
            corpus::save_corpus(&c, &path)?;
            println!("{} samples -> {}", c.len(), path.display());
            Ok(())
        }
    }
}

fn cmd_annotate(args: AnnotateArgs, env: &Env) -> Result<()> {
    let prepared = load_input(&args.input)?;
    let prov = header(
        env.seed.unwrap_or(0),
        &json!({"annotate": content_hash(prepared.corpus.to_lines().as_bytes())}),
    );
    let mut body = prov.header_line();
    body.push('\n');
    for s in &prepared.corpus.samples {
        let rec = AnnotationRecord::from_annotated(&s.id, &prepared.annotations[&s.id]);
        body.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        body.push('\n');
    }
    write(&env.out_dir()?.join("annotations.jsonl"), &body)
}

fn cmd_perturb(args: PerturbArgs, env: &Env) -> Result<()> {
    let mut options = NoiseOptions::default();
    for kv in &args.options {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("option {kv:?} is not key=value")))?;
        options.set(k, v)?;
    }
    args.kind.check_level(args.level)?;
    let mut prepared = load_input(&args.input)?;
    if args.kind == NoiseKind::FreqNgram {
        prepared.ensure_ngrams(options.n.unwrap_or(4));
    }
    if let Some(spec) = &args.candidates {
        let mut providers = attack::start_providers(std::slice::from_ref(spec), attack::DEFAULT_EXTERNAL_K)?;
        let p: Box<dyn CandidateProvider> = providers.remove(0);
        prepared.candidates = Some(Arc::from(p));
    }
    let seed = env.seed.unwrap_or(0);
    let set = harness::noise_corpus(&prepared, args.kind, args.level, &options, 1, 0, seed, &env.exec)?;
    let prov = header(
        seed,
        &json!({
            "corpus": content_hash(prepared.corpus.to_lines().as_bytes()),
            "kind": args.kind,
            "level": args.level,
            "options": options,
        }),
    );
    let body = harness::noised_corpus_lines(&set, &prepared.corpus, &prov);
    write(&env.out_dir()?.join(format!("{}.jsonl", args.kind)), &body)?;
    let skipped = set.hypotheses.iter().filter(|h| h.skipped).count();
    println!(
        "{} level {}: noise-ratio {:.4}, {} of {} samples skipped",
        args.kind,
        args.level,
        set.ratios.mean_ratio,
        skipped,
        set.hypotheses.len()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct NoisedRow {
    id: String,
    hypothesis: String,
}

fn cmd_noise_ratio(args: NoiseRatioArgs) -> Result<()> {
    let gold = corpus::load_corpus(&args.gold, args.task)?;
    let body = fs::read_to_string(&args.noised).map_err(|e| io_err(&args.noised, e))?;
    let mut rows = Vec::new();
    for (n, line) in body.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with("{\"provenance\"") {
            continue;
        }
        let row: NoisedRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: args.noised.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    let g: Vec<(&str, &str)> = gold.samples.iter().map(|s| (s.id.as_str(), s.gold.as_str())).collect();
    let h: Vec<(&str, &str)> = rows.iter().map(|r| (r.id.as_str(), r.hypothesis.as_str())).collect();
    let report = distance::noise_ratio(&g, &h, args.kind)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn verdict_table(verdicts: &[TestVerdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let kind = v.kind.map(|k| k.to_string()).unwrap_or_default();
        let means: Vec<String> = v.levels.iter().map(|l| format!("{:.4}", l.mean)).collect();
        let verdict = match v.verdict {
            Verdict::Pass => "PASS".to_string(),
            Verdict::Fail => format!("FAIL at level {}", v.first_violation.unwrap_or(0)),
        };
        out.push_str(&format!("{:<14} {:<22} {:<18} {}\n", v.metric, kind, verdict, means.join("  ")));
    }
    out
}

fn cmd_run(args: RunArgs, env: &Env) -> Result<()> {
    let mut plan = TestPlan::load(&args.plan)?;
    if let Some(seed) = env.seed {
        plan.seeds.master_seed = seed;
    }
    let exec = match env.threads.unwrap_or(plan.settings.parallelism) {
        0 => Exec::default(),
        n => Exec::with_threads(n),
    };
    let output = harness::run_plan(&plan, &exec)?;
    let prepared_corpus = corpus::load_corpus(&plan.corpus.path, plan.corpus.task)?;
    let out = env.out_dir()?;
    harness::write_run(&output, &prepared_corpus, out)?;
    print!("{}", verdict_table(&output.verdicts));
    println!("reports written to {}", out.display());
    Ok(())
}

fn target_metric(args: &AttackArgs) -> Result<Box<dyn Metric>> {
    match (&args.metric, &args.adapter) {
        (_, Some(cmd)) => {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            let name = argv.first().cloned().unwrap_or_default();
            Ok(Box::new(Scorer::adapter(&AdapterConfig::new(name, argv))?))
        }
        (Some(m), None) if m == "soft-overlap-f" => Ok(Box::new(SoftOverlap::default())),
        (Some(m), None) => Ok(Box::new(Scorer::builtin(m)?)),
        (None, None) => Err(Error::Invalid("attack needs --metric or --adapter".into())),
    }
}

fn cmd_attack(args: AttackArgs, env: &Env) -> Result<()> {
    let c = corpus::load_corpus(&args.corpus, args.task)?;
    let providers = args
        .providers
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<ProviderSpec>>>()?;
    let metric = target_metric(&args)?;
    let cfg = AttackConfig {
        metric: metric.descriptor().name.clone(),
        min_ratio: args.min_ratio,
        providers,
        max_iters: args.max_iters,
    };
    cfg.validate()?;
    let started = attack::start_providers(&cfg.providers, args.k)?;
    let refs: Vec<&dyn CandidateProvider> = started.iter().map(|p| p.as_ref()).collect();
    let results = attack::attack_corpus(&c, &cfg, metric.as_ref(), &refs, &env.exec)?;
    let prov = header(
        env.seed.unwrap_or(0),
        &json!({"corpus": content_hash(c.to_lines().as_bytes()), "attack": cfg}),
    );
    let mut body = prov.header_line();
    body.push('\n');
    for r in &results {
        body.push_str(&serde_json::to_string(r).expect("result serializes"));
        body.push('\n');
    }
    write(&env.out_dir()?.join("attack.jsonl"), &body)?;
    let reached = results.iter().filter(|r| r.reached).count();
    println!("{} of {} samples reached ratio {}", reached, results.len(), cfg.min_ratio);
    Ok(())
}

fn cmd_report(args: ReportArgs, env: &Env) -> Result<()> {
    let (prov, records): (_, Vec<ScoreRecord>) = harness::read_jsonl(&args.run_dir.join("records.jsonl"))?;
    let prov = prov.unwrap_or_else(|| Provenance::new(env.seed.unwrap_or(0), ""));
    let (aggregates, verdicts) = harness::verdicts_from_records(&records, args.tie_tol)?;
    harness::emit_report(&verdicts, &records, &aggregates, &prov, env.out_dir()?)?;
    print!("{}", verdict_table(&verdicts));
    Ok(())
}

fn cmd_ngrams(args: NgramArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::Invalid("n must be at least 1".into()));
    }
    let c = corpus::load_corpus(&args.corpus, args.task)?;
    let table = perturb::collect_ngrams(&c, args.n);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for g in table.top(args.top.min(table.len())) {
        writeln!(out, "{}\t{}", g.count, g.tokens.join(" ")).map_err(|e| Error::Io {
            context: "stdout".into(),
            source: e,
        })?;
    }
    Ok(())
}

fn dispatch(cli: Cli, env: &Env) -> Result<()> {
    match cli.command {
        Command::Corpus(c) => cmd_corpus(c, env),
        Command::Annotate(a) => cmd_annotate(a, env),
        Command::Perturb(a) => cmd_perturb(a, env),
        Command::NoiseRatio(a) => cmd_noise_ratio(a),
        Command::Run(a) => cmd_run(a, env),
        Command::Attack(a) => cmd_attack(a, env),
        Command::Report(a) => cmd_report(a, env),
        Command::Ngrams(a) => cmd_ngrams(a),
    }
}

fn resolve(global: &GlobalArgs) -> Result<(Env, log::LevelFilter)> {
    let cfg = match &global.config {
        Some(p) => GlobalConfig::load(p)?,
        None => GlobalConfig::default(),
    };
    let level = if global.quiet {
        log::LevelFilter::Error
    } else {
        match global.verbose {
            0 => cfg.verbosity.unwrap_or(log::LevelFilter::Warn),
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    let threads = global.parallelism.or(cfg.parallelism);
    let exec = match threads.unwrap_or(0) {
        0 => Exec::default(),
        n => Exec::with_threads(n),
    };
    let env = Env {
        seed: global.seed.or(cfg.master_seed),
        threads,
        exec,
        out: global
            .out
            .clone()
            .or(cfg.out)
            .unwrap_or_else(|| PathBuf::from("stresslab-out")),
    };
    Ok((env, level))
}

fn report_error(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (env, level) = match resolve(&cli.global) {
        Ok(x) => x,
        Err(e) => return report_error(&e),
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("STRESSLAB_LOG")
        .init();
    match dispatch(cli, &env) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

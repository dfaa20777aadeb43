//! Exit codes and artifacts of the command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(file)
}

fn stresslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stresslab"))
        .args(args)
        .env_remove("STRESSLAB_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn demo_plan_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stresslab(&["run", path_str(&demo("demo_plan.jsonl")), "--out", path_str(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("truncation"));
    for f in ["records.jsonl", "summary.jsonl", "verdicts.jsonl", "plot_data.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(tmp.path().join("plot_data.csv")).unwrap();
    assert!(csv.starts_with("# tool=stresslab"));
    assert!(csv.contains("master_seed=2024"));
}

#[test]
fn seed_env_overrides_plan_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stresslab"))
        .args(["run", path_str(&demo("demo_plan.jsonl")), "--out", path_str(tmp.path())])
        .env("STRESSLAB_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let records = fs::read_to_string(tmp.path().join("records.jsonl")).unwrap();
    assert!(records.lines().next().unwrap().contains("\"master_seed\":77"));
}

#[test]
fn bad_plan_path_exits_1() {
    let o = stresslab(&["run", "/no/such/plan.jsonl"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn unknown_flag_exits_1_with_usage() {
    let o = stresslab(&["run", "--frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&stresslab(&["run", "--help"])), 0);
}

#[test]
fn adapter_crash_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::copy(demo("demo_corpus.jsonl"), tmp.path().join("c.jsonl")).unwrap();
    let plan = tmp.path().join("plan.jsonl");
    fs::write(
        &plan,
        "{\"type\":\"corpus\",\"path\":\"c.jsonl\",\"task\":\"summarization\"}\n\
         {\"type\":\"noise\",\"kind\":\"truncation\",\"levels\":[0.5]}\n\
         {\"type\":\"adapter\",\"name\":\"broken\",\"command\":[\"sh\",\"-c\",\"exit 3\"],\"timeout\":5}\n",
    )
    .unwrap();
    let o = stresslab(&["run", path_str(&plan), "--out", path_str(&tmp.path().join("out"))]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken"));
}

#[test]
fn perturb_then_noise_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = demo("demo_corpus.jsonl");
    let o = stresslab(&[
        "perturb",
        path_str(&corpus),
        "--task",
        "summarization",
        "--kind",
        "truncation",
        "--level",
        "0.3",
        "--seed",
        "5",
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let noised = tmp.path().join("truncation.jsonl");
    let body = fs::read_to_string(&noised).unwrap();
    assert!(body.lines().next().unwrap().contains("\"master_seed\":5"));
    let o = stresslab(&["noise-ratio", path_str(&corpus), path_str(&noised), "--task", "summarization"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = report["mean_ratio"].as_f64().unwrap();
    assert!(r > 0.25 && r < 0.45, "{r}");
}

#[test]
fn perturb_rejects_bad_level() {
    let o = stresslab(&[
        "perturb",
        path_str(&demo("demo_corpus.jsonl")),
        "--task",
        "summarization",
        "--kind",
        "truncation",
        "--level",
        "1.5",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn annotations_round_trip_through_perturb() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = demo("demo_corpus.jsonl");
    let o = stresslab(&["annotate", path_str(&corpus), "--task", "summarization", "--out", path_str(tmp.path())]);
    assert_eq!(code(&o), 0);
    let ann = tmp.path().join("annotations.jsonl");
    let o = stresslab(&[
        "perturb",
        path_str(&corpus),
        "--task",
        "summarization",
        "--annotations",
        path_str(&ann),
        "--kind",
        "article_removal",
        "--level",
        "1",
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn attack_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stresslab(&[
        "attack",
        path_str(&demo("demo_corpus.jsonl")),
        "--task",
        "summarization",
        "--metric",
        "soft-overlap-f",
        "--min-ratio",
        "0.1",
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = fs::read_to_string(tmp.path().join("attack.jsonl")).unwrap();
    assert_eq!(body.lines().count(), 1 + 12);
    let o = stresslab(&["attack", path_str(&demo("demo_corpus.jsonl")), "--task", "summarization", "--metric", "rougeL", "--min-ratio", "0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn report_recomputes_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&stresslab(&["run", path_str(&demo("demo_plan.jsonl")), "--out", path_str(&run)])), 0);
    let again = tmp.path().join("again");
    let o = stresslab(&["report", path_str(&run), "--out", path_str(&again)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(run.join("records.jsonl")).unwrap(),
        fs::read(again.join("records.jsonl")).unwrap()
    );
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn corpus_and_ngram_utilities() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stresslab(&["corpus", "validate", path_str(&demo("demo_corpus.jsonl")), "--task", "summarization"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("12 samples"));
    let raw = tmp.path().join("wiki.txt");
    fs::write(&raw, " = Heading = \n\nThe bridge was built in 1 @,@ 200 days . It is 3 @.@ 5 km long .\n\nA second paragraph ( with brackets ) .\n").unwrap();
    let o = stresslab(&["corpus", "clean-wikitext", path_str(&raw), "--out", path_str(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cleaned = fs::read_to_string(tmp.path().join("corpus.jsonl")).unwrap();
    assert!(cleaned.contains("1,200 days. It is 3.5 km long."), "{cleaned}");
    let o = stresslab(&["ngrams", path_str(&demo("demo_corpus.jsonl")), "--task", "summarization", "--n", "2", "--top", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn config_file_supplies_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("stresslab.jsonl");
    fs::write(&cfg, "{\"type\":\"global\",\"master_seed\":31,\"out\":\"from-config\"}\n").unwrap();
    let o = stresslab(&["--config", path_str(&cfg), "run", path_str(&demo("demo_plan.jsonl"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let records = fs::read_to_string(tmp.path().join("from-config/records.jsonl")).unwrap();
    assert!(records.starts_with("{\"provenance\":{\"master_seed\":31"));
    fs::write(&cfg, "{\"type\":\"global\",\"seed\":31}\n").unwrap();
    assert_eq!(code(&stresslab(&["--config", path_str(&cfg), "run", path_str(&demo("demo_plan.jsonl"))])), 1);
}

//! Protocol failures surfaced by the echo adapter test double.

use std::sync::Arc;

use stresslab_core::adapter::{AdapterClient, AdapterConfig, ScoreItem, Scorer};
use stresslab_core::annotate::AnnotationSource;
use stresslab_core::attack::ExternalProvider;
use stresslab_core::corpus::{Corpus, Sample, Task};
use stresslab_core::exec::Exec;
use stresslab_core::harness::{self, Prepared};
use stresslab_core::metrics::{Needs, Scope};
use stresslab_core::perturb::{CandidateProvider, NoiseKind, NoiseOptions};
use stresslab_core::Error;

fn cfg(args: &[&str]) -> AdapterConfig {
    let mut command = vec![env!("CARGO_BIN_EXE_stresslab-echo-adapter").to_string()];
    command.extend(args.iter().map(|a| a.to_string()));
    AdapterConfig {
        timeout: 5.0,
        ..AdapterConfig::new("echo", command)
    }
}

fn items(n: usize) -> Vec<ScoreItem> {
    (0..n)
        .map(|i| ScoreItem {
            id: format!("i{i}"),
            hypothesis: format!("hypothesis {i}"),
            source: Some("src".into()),
            references: vec!["ref".into()],
        })
        .collect()
}

fn adapter_message(e: Error) -> String {
    match e {
        Error::Adapter { message, .. } => message,
        other => panic!("expected adapter error, got {other:?}"),
    }
}

#[test]
fn responses_are_matched_by_id_across_batches() {
    let mut c = cfg(&["--score", "0.75"]);
    c.batch_size = 3;
    let mut client = AdapterClient::spawn(&c).unwrap();
    let resp = client.score_batch(&items(10)).unwrap();
    let ids: Vec<String> = resp.iter().map(|r| r.id.clone()).collect();
    assert_eq!(ids, (0..10).map(|i| format!("i{i}")).collect::<Vec<_>>());
    assert!(resp.iter().all(|r| r.score == 0.75));
}

#[test]
fn missing_id_is_an_error() {
    let mut client = AdapterClient::spawn(&cfg(&["--omit", "i2"])).unwrap();
    let msg = adapter_message(client.score_batch(&items(4)).unwrap_err());
    assert!(msg.contains("i2"), "{msg}");
}

#[test]
fn garbage_output_is_an_error() {
    let mut client = AdapterClient::spawn(&cfg(&["--garbage"])).unwrap();
    let msg = adapter_message(client.score_batch(&items(1)).unwrap_err());
    assert!(msg.contains("malformed"), "{msg}");
}

#[test]
fn crash_mid_batch_is_an_error() {
    let mut client = AdapterClient::spawn(&cfg(&["--die-after", "2"])).unwrap();
    let err = client.score_batch(&items(5)).unwrap_err();
    assert!(!err.is_validation());
    assert!(matches!(err, Error::Adapter { .. }), "{err:?}");
}

#[test]
fn reserved_and_repeated_ids_are_rejected() {
    let mut client = AdapterClient::spawn(&cfg(&[])).unwrap();
    let mut dup = items(2);
    dup[1].id = "i0".into();
    assert!(client.score_batch(&dup).unwrap_err().is_validation());
    let mut reserved = items(1);
    reserved[0].id = "__set__".into();
    assert!(client.score_batch(&reserved).unwrap_err().is_validation());
}

#[test]
fn capability_mismatch_is_reported() {
    let mut c = cfg(&["--scope", "set"]);
    c.scope = Some(Scope::Sample);
    assert!(adapter_message(AdapterClient::spawn(&c).unwrap_err()).contains("scope"));
    let mut c = cfg(&["--needs", "source"]);
    c.needs = Some(Needs::default());
    assert!(adapter_message(AdapterClient::spawn(&c).unwrap_err()).contains("needs"));
}

#[test]
fn scorer_strips_unneeded_fields() {
    let scorer = Scorer::adapter(&cfg(&["--score", "0.1"])).unwrap();
    assert_eq!(scorer.descriptor().needs, Needs::default());
    let s = scorer.score_set(&items(7), &Exec::Sequential).unwrap();
    assert_eq!(s.per_sample.as_ref().map(Vec::len), Some(7));
    assert!((s.mean - 0.1).abs() < 1e-12);
}

#[test]
fn external_provider_dedupes_and_limits() {
    let p = ExternalProvider::spawn(&cfg(&["--candidates", "dog,dog,cat,bird,fox"]), 3).unwrap();
    let toks = vec!["the".to_string(), "cow".to_string()];
    assert_eq!(p.candidates(&toks, 1).unwrap(), vec!["dog", "cat", "bird"]);
    let empty = ExternalProvider::spawn(&cfg(&["--candidates", ""]), 3).unwrap();
    assert!(empty.candidates(&toks, 1).unwrap().is_empty());
}

#[test]
fn bert_diverge_uses_an_external_provider() {
    let corpus = Corpus::new(
        Task::OpenEnded,
        vec![Sample::new("a", "The cow sat on the hill."), Sample::new("b", "A bird flew by.")],
    )
    .unwrap();
    let mut p = Prepared::new(corpus, &AnnotationSource::Rules).unwrap();
    let opts = NoiseOptions::default();
    let err = harness::noise_corpus(&p, NoiseKind::BertDiverge, 0.5, &opts, 1, 0, 1, &Exec::Sequential).unwrap_err();
    assert!(err.is_validation());
    let provider = ExternalProvider::spawn(&cfg(&["--candidates", "zebra"]), 8).unwrap();
    p.candidates = Some(Arc::new(provider));
    let set = harness::noise_corpus(&p, NoiseKind::BertDiverge, 1.0, &opts, 1, 0, 1, &Exec::Sequential).unwrap();
    for h in &set.hypotheses {
        assert!(h.text.contains("zebra"), "{}", h.text);
    }
}

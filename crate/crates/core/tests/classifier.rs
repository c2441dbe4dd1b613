//! Failure classification against the hand-labelled log corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use deployforge_core::executor::{classify_failure, ExitStatus, FailureCategory, Phase};

fn logs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/logs")
}

fn labels() -> BTreeMap<String, FailureCategory> {
    serde_json::from_str(&std::fs::read_to_string(logs().join("labels.json")).unwrap()).unwrap()
}

#[test]
fn corpus_is_large_enough() {
    let labels = labels();
    assert!(labels.len() >= 30);
    for cat in FailureCategory::ALL {
        let n = labels.values().filter(|c| **c == cat).count();
        assert!(n >= 4, "{cat:?} has {n} logs");
    }
    let on_disk = std::fs::read_dir(logs()).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "log")
    });
    assert_eq!(on_disk.count(), labels.len());
}

#[test]
fn classifier_agrees_with_every_label() {
    let t = Instant::now();
    let mut wrong = Vec::new();
    for (file, want) in labels() {
        let text = std::fs::read_to_string(logs().join(&file)).unwrap();
        let phase = if text.starts_with("Running validation") { Phase::Validate } else { Phase::Build };
        let got = classify_failure(&text, &ExitStatus::Code(1), phase).unwrap();
        if got != want {
            wrong.push(format!("{file}: labelled {want:?}, classified {got:?}"));
        }
    }
    assert!(wrong.is_empty(), "{wrong:#?}");
    assert!(t.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn exit_zero_has_nothing_to_classify() {
    assert!(classify_failure("all good", &ExitStatus::Code(0), Phase::Build).is_err());
    assert!(classify_failure("", &ExitStatus::Timeout, Phase::Validate).is_ok());
}

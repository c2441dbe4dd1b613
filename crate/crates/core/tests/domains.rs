//! Domain assignment with the term-frequency embedder against hand-computed
//! cosine scores.

use std::collections::BTreeSet;

use deployforge_core::clients::Embedder;

use deployforge_core::recipe::{BuildSpec, ImageRef};
use deployforge_core::registry::{assign_domains, Registration, Registry};
use proptest::prelude::*;

mod common;

use common::domain_fixture::{load, record, Tool};


#[test]
fn hand_computed_scores() {
    let (f, tax, emb) = load();
    assert_eq!(emb.dimension(), 12);
    assert_eq!(f.threshold, 0.5);
    for tool in &f.tools {
        let all = assign_domains(&tool.description, &tax, &emb, 0.0).unwrap();
        assert_eq!(all.len(), tax.domains.len());
        for s in &all {
            let (formula, want) = &tool.scores[&s.domain_id];
            assert!((s.score - want).abs() <= 1e-12, "{} / {}: {} vs {formula} = {want}", tool.name, s.domain_id, s.score);
        }
        let assigned: BTreeSet<String> =
            assign_domains(&tool.description, &tax, &emb, f.threshold).unwrap().into_iter().map(|d| d.domain_id).collect();
        assert_eq!(assigned, tool.assigned.iter().cloned().collect(), "{}", tool.name);
    }
}

#[test]
fn self_similar_and_orthogonal() {
    let (_, tax, emb) = load();
    for d in &tax.domains {
        let got = assign_domains(&d.definition, &tax, &emb, 0.5).unwrap();
        let me = got.iter().find(|s| s.domain_id == d.id).expect("self assigned");
        assert!((me.score - 1.0).abs() <= 1e-12);
    }
    let genomics = &tax.get("genomics").unwrap().definition;
    let all = assign_domains(genomics, &tax, &emb, 0.0).unwrap();
    let climate = all.iter().find(|s| s.domain_id == "climate").unwrap();
    assert_eq!(climate.score, 0.0);
    assert!(assign_domains(genomics, &tax, &emb, 0.5).unwrap().iter().all(|s| s.domain_id != "climate"));
}

#[test]
fn overlapping_domains_count_tools_more_than_once() {
    let (f, tax, emb) = load();
    let tmp = tempfile::tempdir().unwrap();
    let mut reg = Registry::open(&tmp.path().join("registry.jsonl")).unwrap();
    let spec = BuildSpec {
        base_image: ImageRef::new("python", "3.11-slim"),
        system_packages: vec![],
        env_vars: vec![],
        copy_source: true,
        workdir: "/app".into(),
        build_steps: vec![],
        entrypoint: vec!["python".into(), "main.py".into()],
        validate_cmd: vec!["python".into(), "main.py".into(), "--help".into()],
    };
    let corpus: Vec<&Tool> = f.tools.iter().filter(|t| !t.assigned.is_empty()).collect();
    for t in &corpus {
        let rec = record(&format!("{}@000000000000", t.name));
        let r = Registration {
            record: &rec,
            spec: &spec,
            image_digest: "sha256:0",
            name: &t.name,
            description: &t.description,
            tags: &[],
            registered_at: rec.ended_at,
        };
        reg.register(&r, &tax, &emb, f.threshold).unwrap();
    }
    let counts = reg.domain_counts();
    let summed: u64 = counts.values().sum();
    let expected: usize = corpus.iter().map(|t| t.assigned.len()).sum();
    assert_eq!(summed as usize, expected);
    assert!(summed > reg.len() as u64, "{summed} vs {}", reg.len());
}

proptest! {
    #[test]
    fn scores_are_bounded_and_threshold_monotone(
        words in prop::collection::vec(prop::sample::select(vec![
            "protein", "folding", "genome", "ocean", "climate", "model", "shoes", "the", "simulation",
        ]), 1..8),
        lo in 0.0f64..1.0,
        hi in 0.0f64..1.0,
    ) {
        let (_, tax, emb) = load();
        let text = words.join(" ");
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let a = assign_domains(&text, &tax, &emb, lo).unwrap();
        let b = assign_domains(&text, &tax, &emb, hi).unwrap();
        prop_assert!(a.iter().all(|s| (-1e-12..=1.0 + 1e-12).contains(&s.score) && s.score >= lo));
        prop_assert!(b.iter().all(|s| a.contains(s)));
        prop_assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
    }
}

//! Discovery funnel against the committed 20-repo corpus and random corpora.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use deployforge_core::clients::{
    Clients, EdgeKind, GitCli, MockEmbedder, MockGitHost, MockModel, MockSearch, RepoEdge, RepoMetadata,
    RetryPolicy, Role,
};
use deployforge_core::funnel::{run_funnel, FunnelConfig, FunnelReport, Stage};
use deployforge_core::par::Exec;
use deployforge_core::taxonomy::{Domain, DomainTaxonomy};
use proptest::prelude::*;
use serde_json::Value;

mod common;

use common::funnel_oracle::{copy_shuffled, corpus, oracle};


fn run(dir: &Path, exec: Exec) -> (String, FunnelReport) {
    let clients = Clients::mock(dir).unwrap().with_retry(RetryPolicy::immediate(2));
    let tax = DomainTaxonomy::load(&dir.join("taxonomy.json")).unwrap();
    let (pool, report) = run_funnel(&tax, &clients, &FunnelConfig::default(), exec, None).unwrap();
    (pool.to_jsonl(), report)
}

#[test]
fn fixture_matches_brute_force_oracle() {
    let t = Instant::now();
    let want = oracle(&corpus());
    assert_eq!(want.counts, vec![12, 14, 9, 6]);

    let (pool, report) = run(&corpus(), Exec::Parallel);
    assert_eq!(report.counts(), want.counts);
    for (bucket, n) in &report.rejections {
        let ids: BTreeSet<String> = report.rejected[bucket].iter().cloned().collect();
        assert_eq!(ids.len(), *n);
        assert_eq!(&ids, want.buckets.get(bucket).unwrap_or(&BTreeSet::new()), "bucket {bucket}");
    }
    assert_eq!(report.rejections.len(), 6);
    let got: BTreeSet<String> = pool
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["repo_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(got, want.survivors);
    assert_eq!(report.unclassified, want.unclassified.len());
    assert_eq!(report.keyword_fallbacks, vec!["seismology".to_string()]);
    assert!(t.elapsed().as_secs_f64() < 1.0, "{:?}", t.elapsed());
}

#[test]
fn pool_lines_carry_provenance() {
    let (pool, _) = run(&corpus(), Exec::Sequential);
    let recs: Vec<Value> = pool.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let analysis = recs.iter().find(|r| r["repo_id"] == "github.com/fx/md-analysis").unwrap();
    let reasons: Vec<&str> =
        analysis["provenance"].as_array().unwrap().iter().map(|p| p["reason"].as_str().unwrap()).collect();
    assert!(reasons.contains(&"anchor github.com/fx/md-engine via dependency"), "{reasons:?}");
    let kit = recs.iter().find(|r| r["repo_id"] == "github.com/fx/seismology-kit").unwrap();
    assert_eq!(kit["unclassified"], true);
    assert!(recs.iter().all(|r| r["stage"] == "executable_candidate"));
    // fluid-solver is two hops from the keyword hits.
    assert!(!pool.contains("fluid-solver"));
}

#[test]
fn shuffled_inputs_give_identical_output() {
    let (pool, report) = run(&corpus(), Exec::Parallel);
    for seed in 0..5 {
        let tmp = copy_shuffled(seed);
        assert_eq!(oracle(tmp.path()).counts, vec![12, 14, 9, 6]);
        for exec in [Exec::Sequential, Exec::Parallel] {
            let (p, r) = run(tmp.path(), exec);
            assert_eq!(p, pool, "seed {seed}");
            assert_eq!(r.without_timing(), report.without_timing(), "seed {seed}");
        }
    }
}

#[test]
fn stop_after_and_skip_expansion() {
    let clients = Clients::mock(&corpus()).unwrap();
    let tax = DomainTaxonomy::load(&corpus().join("taxonomy.json")).unwrap();
    let (raw, r) = run_funnel(&tax, &clients, &FunnelConfig::default(), Exec::Parallel, Some(Stage::Raw)).unwrap();
    assert_eq!((raw.stage, raw.len(), r.counts()), (Stage::Raw, 12, vec![12]));
    let cfg = FunnelConfig { skip_expansion: true, ..Default::default() };
    let (_, r) = run_funnel(&tax, &clients, &cfg, Exec::Parallel, None).unwrap();
    assert_eq!(r.counts()[0], 12);
    assert_eq!(r.stages[1].stage, Stage::ToolLike);
    let cfg = FunnelConfig { anchor_depth: 2, ..Default::default() };
    let (_, r) = run_funnel(&tax, &clients, &cfg, Exec::Parallel, Some(Stage::Expanded)).unwrap();
    assert_eq!(r.counts(), vec![12, 15]);
}

// Random corpora: structural invariants of the funnel.

const WORDS: &[&str] = &["lattice", "genome", "solver", "plasma", "notes", "awesome-", "tutorial", "list of"];
const FILES: &[&str] = &["main.py", "README.md", "setup.py", "data.csv", "docs/a.md", "lib.rs"];
const LICENSES: &[&str] = &["mit", "unknown", "proprietary", "gpl-3.0"];

#[derive(Debug, Clone)]
struct Spec {
    desc: Vec<usize>,
    archived: bool,
    license: usize,
    files: Vec<usize>,
    label: u8,
    edges: Vec<(usize, u8)>,
}

fn spec() -> impl Strategy<Value = Spec> {
    (
        prop::collection::vec(0..WORDS.len(), 1..3),
        prop::bool::weighted(0.15),
        0..LICENSES.len(),
        prop::collection::vec(0..FILES.len(), 0..3),
        0u8..3,
        prop::collection::vec((0usize..40, 0u8..4), 0..3),
    )
        .prop_map(|(desc, archived, license, files, label, edges)| Spec { desc, archived, license, files, label, edges })
}

fn build(specs: &[Spec]) -> Clients {
    let id = |i: usize| format!("github.com/p/r{i}");
    let repos: Vec<RepoMetadata> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| RepoMetadata {
            repo_id: id(i),
            url: String::new(),
            license_id: LICENSES[s.license].into(),
            primary_language: "python".into(),
            star_count: 0,
            is_archived: s.archived,
            description: s.desc.iter().map(|w| WORDS[*w]).collect::<Vec<_>>().join(" "),
            topics: vec![],
        })
        .collect();
    let mut host = MockGitHost::new(repos).with_page_size(3);
    let mut model = MockModel::default()
        .with_response(Role::Proposer, "expand_keywords", "d1", "lattice; genome")
        .with_response(Role::Proposer, "expand_keywords", "d2", "solver, plasma");
    for (i, s) in specs.iter().enumerate() {
        let files: Vec<&str> = s.files.iter().map(|f| FILES[*f]).collect();
        host = host.with_tree(&id(i), &files);
        for (to, kind) in &s.edges {
            let kind = [EdgeKind::Dependency, EdgeKind::Reference, EdgeKind::Contributor, EdgeKind::Link][*kind as usize];
            host = host.with_edge(RepoEdge { from: id(i), to: id(*to % (specs.len() + 2)), kind });
        }
        model = match s.label {
            0 => model.with_response(Role::Proposer, "classify_tool", &id(i), "executable scientific tool"),
            1 => model.with_response(Role::Proposer, "classify_tool", &id(i), "library"),
            _ => model.with_failure(Role::Proposer, "classify_tool", &id(i)),
        };
    }
    Clients {
        host: Arc::new(host),
        search: Arc::new(MockSearch::default()),
        model: Arc::new(model),
        embedder: Arc::new(MockEmbedder::from_terms(["x"])),
        cloner: Arc::new(GitCli::default()),
        retry: RetryPolicy::immediate(1),
    }
}

fn two_domains() -> DomainTaxonomy {
    let d = |id: &str| Domain { id: id.into(), name: id.into(), definition: "d".into(), keywords: vec![] };
    DomainTaxonomy { domains: vec![d("d1"), d("d2")] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn funnel_invariants(specs in prop::collection::vec(spec(), 0..30), depth in 0u32..3) {
        let clients = build(&specs);
        let cfg = FunnelConfig { anchor_depth: depth, ..Default::default() };
        let (pool, report) = run_funnel(&two_domains(), &clients, &cfg, Exec::Parallel, None).unwrap();
        let c = report.counts();
        prop_assert_eq!(c.len(), 4);
        prop_assert!(c[1] >= c[0]);
        prop_assert!(c[2] <= c[1] && c[3] <= c[2]);
        let heuristic: usize = report.rejections.iter().filter(|(k, _)| *k != "semantic").map(|(_, v)| v).sum();
        prop_assert_eq!(heuristic, c[1] - c[2]);
        prop_assert_eq!(report.rejections["semantic"], c[2] - c[3]);
        let mut seen = BTreeSet::new();
        for ids in report.rejected.values() {
            for id in ids {
                prop_assert!(seen.insert(id.clone()), "{} in two buckets", id);
            }
        }
        prop_assert_eq!(pool.len(), c[3]);
        prop_assert!(pool.members.keys().all(|k| pool.provenance.contains_key(k)));
        // Failed classifications are never dropped.
        for (i, s) in specs.iter().enumerate() {
            let id = format!("github.com/p/r{i}");
            if s.label == 2 && !seen.contains(&id) && pool.members.contains_key(&id) {
                prop_assert!(pool.unclassified.contains(&id));
            }
        }
        let (seq, seq_report) = run_funnel(&two_domains(), &clients, &cfg, Exec::Sequential, None).unwrap();
        prop_assert_eq!(seq.to_jsonl(), pool.to_jsonl());
        prop_assert_eq!(seq_report.without_timing(), report.without_timing());
    }
}

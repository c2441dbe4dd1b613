//! One repository through ingest, recipe refinement, build and validation.

use std::collections::BTreeMap;
use std::path::Path;

use deployforge_core::analyzer::{analyze, ingest, EvidenceOptions, IngestOptions, SourceLocation};
use deployforge_core::clients::RepoMetadata;
use deployforge_core::executor::sim::SimScript;
use deployforge_core::executor::{build_image, validate_tool, ExecutionLimits, SimBackend};
use deployforge_core::recipe::{refine_loop, Reviewer, RuleProposer};
use serde::Deserialize;

use super::fixtures;

#[derive(Debug, Deserialize)]
pub struct Expected {
    pub proposer_only: bool,
    pub reviewed: bool,
    #[serde(default)]
    pub trap: Option<String>,
}

pub fn meta(name: &str) -> RepoMetadata {
    RepoMetadata {
        repo_id: format!("github.com/fixtures/{name}"),
        url: format!("https://github.com/fixtures/{name}"),
        license_id: "mit".into(),
        primary_language: "unknown".into(),
        star_count: 0,
        is_archived: false,
        description: String::new(),
        topics: vec![],
    }
}

pub fn deploys(name: &str, reviewer: &dyn Reviewer, rounds: u32, work: &Path) -> bool {
    let opts = IngestOptions::new(work.join("snap"));
    let src = SourceLocation::Local(fixtures().join("repos").join(name));
    let snap = ingest(&meta(name), &src, None, &opts).unwrap();
    let doc = analyze(&snap, None, &EvidenceOptions::default());
    let Ok(out) = refine_loop(&doc.evidence, &RuleProposer::default(), reviewer, rounds) else {
        return false;
    };
    let backend = SimBackend::new(SimScript::default(), work.join("images"));
    let limits = ExecutionLimits::default();
    let log = work.join(format!("{name}.log"));
    let b = build_image(&out.spec, &snap.checkout_path, &limits, &backend, &log).unwrap();
    let Some(d) = b.image_digest else { return false };
    validate_tool(&d, &out.spec.validate_cmd, &limits, &backend, &log).unwrap().passed
}

/// Per-repository expectations, keyed by fixture name.
pub fn expected() -> BTreeMap<String, Expected> {
    let text = std::fs::read_to_string(fixtures().join("uplift_expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

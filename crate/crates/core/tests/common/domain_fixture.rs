//! The hand-computed domain score fixture.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use deployforge_core::clients::MockEmbedder;
use deployforge_core::executor::{ExitStatus, Outcome};
use deployforge_core::taxonomy::DomainTaxonomy;
use deployforge_core::trace::{AttemptRecord, SCHEMA_VERSION};
use serde::Deserialize;

pub fn dir() -> PathBuf {
    super::fixtures().join("domains")
}

#[derive(Deserialize)]
pub struct Fixture {
    pub threshold: f64,
    pub tools: Vec<Tool>,
}

#[derive(Deserialize)]
pub struct Tool {
    pub name: String,
    pub description: String,
    /// Domain id to (formula, value).
    pub scores: BTreeMap<String, (String, f64)>,
    pub assigned: Vec<String>,
}

pub fn load() -> (Fixture, DomainTaxonomy, MockEmbedder) {
    let f: Fixture = serde_json::from_str(&std::fs::read_to_string(dir().join("scores.json")).unwrap()).unwrap();
    let tax = DomainTaxonomy::load(&dir().join("taxonomy.json")).unwrap();
    let emb = MockEmbedder::load_or_default(&dir().join("vocab.txt")).unwrap();
    (f, tax, emb)
}

/// A validated successful attempt for `id`.
pub fn record(id: &str) -> AttemptRecord {
    let t: DateTime<Utc> = "2025-01-01T00:00:00Z".parse().unwrap();
    AttemptRecord {
        schema_version: SCHEMA_VERSION,
        tool_id: id.into(),
        repo_url: format!("https://github.com/fx/{id}"),
        primary_language: "python".into(),
        artifact_count: 1,
        outcome: Outcome::Success,
        failure_category: None,
        build_duration_s: 10.0,
        validation_exit: Some(ExitStatus::Code(0)),
        rounds_used: 1,
        started_at: t,
        ended_at: t,
    }
}

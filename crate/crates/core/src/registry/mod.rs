//! Store of execution-validated tools with domain assignment and search.
//!
//! The store is an append-only JSON-lines file; the in-memory index is
//! rebuilt on open. Each line is written with a single `write` call so a
//! crash never leaves half an entry behind a valid one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{cosine, ClientError, Embedder};
use crate::executor::{ExitStatus, Outcome};
use crate::recipe::BuildSpec;
use crate::taxonomy::DomainTaxonomy;
use crate::trace::AttemptRecord;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub domain_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolEntry {
    pub schema_version: u32,
    pub tool_id: String,
    pub name: String,
    pub description: String,
    pub tags: Vec<String>,
    pub language: String,
    pub entrypoint: Vec<String>,
    pub image_digest: String,
    pub domains: Vec<DomainScore>,
    /// Set when domain assignment failed and should be retried.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub domains_pending: bool,
    pub validated: bool,
    pub registered_at: DateTime<Utc>,
}

impl ToolEntry {
    /// Equality ignoring the registration time.
    fn same_content(&self, other: &ToolEntry) -> bool {
        let mut a = self.clone();
        a.registered_at = other.registered_at;
        a == *other
    }
}

/// Agent-facing description of one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_id: String,
    pub name: String,
    pub description: String,
    pub entrypoint: Vec<String>,
    pub image_digest: String,
    pub domains: Vec<DomainScore>,
    pub schema_version: u32,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry store {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("registry store {path} line {line}: {msg}")]
    Corrupt { path: PathBuf, line: usize, msg: String },
    #[error("refusing to register {tool_id}: {reason}")]
    NotValidated { tool_id: String, reason: String },
    #[error("conflicting registration for {0}: stored entry differs")]
    Conflict(String),
    #[error("unknown tool id {0}")]
    UnknownTool(String),
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("empty taxonomy")]
    EmptyTaxonomy,
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// What the pipeline knows about a validated tool.
#[derive(Debug, Clone)]
pub struct Registration<'a> {
    pub record: &'a AttemptRecord,
    pub spec: &'a BuildSpec,
    pub image_digest: &'a str,
    pub name: &'a str,
    pub description: &'a str,
    pub tags: &'a [String],
    pub registered_at: DateTime<Utc>,
}

/// Cosine similarity of the description against each domain definition;
/// domains scoring at least `threshold`, best first, ties by id.
pub fn assign_domains(
    description: &str,
    taxonomy: &DomainTaxonomy,
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<Vec<DomainScore>, RegistryError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(RegistryError::BadThreshold(threshold));
    }
    if taxonomy.is_empty() {
        return Err(RegistryError::EmptyTaxonomy);
    }
    let d = embedder.embed_text(description)?;
    let mut out = Vec::new();
    for dom in &taxonomy.domains {
        let v = embedder.embed_text(&dom.definition)?;
        let score = cosine(&d, &v);
        if score >= threshold {
            out.push(DomainScore { domain_id: dom.id.clone(), score });
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.domain_id.cmp(&b.domain_id)));
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchFilter {
    pub domain: Option<String>,
    pub tag: Option<String>,
    pub language: Option<String>,
}

impl SearchFilter {
    fn accepts(&self, e: &ToolEntry) -> bool {
        self.domain.as_ref().map_or(true, |d| e.domains.iter().any(|x| &x.domain_id == d))
            && self.tag.as_ref().map_or(true, |t| e.tags.iter().any(|x| x.eq_ignore_ascii_case(t)))
            && self.language.as_ref().map_or(true, |l| e.language.eq_ignore_ascii_case(l))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub score: f64,
    pub entry: ToolEntry,
}

#[derive(Debug)]
pub struct Registry {
    path: PathBuf,
    entries: BTreeMap<String, ToolEntry>,
}

impl Registry {
    /// Opens (or lazily creates) the store at `path`.
    pub fn open(path: &Path) -> Result<Self, RegistryError> {
        let mut entries = BTreeMap::new();
        match std::fs::read_to_string(path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let corrupt = |msg: String| RegistryError::Corrupt { path: path.into(), line: i + 1, msg };
                    let e: ToolEntry = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
                    if !e.validated {
                        return Err(corrupt(format!("{} stored with validated=false", e.tool_id)));
                    }
                    entries.insert(e.tool_id.clone(), e);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(RegistryError::Io { path: path.into(), source }),
        }
        Ok(Registry { path: path.into(), entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, tool_id: &str) -> Option<&ToolEntry> {
        self.entries.get(tool_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ToolEntry> {
        self.entries.values()
    }

    /// Persists a validated tool. Re-registering identical content is a
    /// no-op; different content under the same id is a conflict.
    pub fn register(
        &mut self,
        reg: &Registration<'_>,
        taxonomy: &DomainTaxonomy,
        embedder: &dyn Embedder,
        threshold: f64,
    ) -> Result<ToolEntry, RegistryError> {
        let rec = reg.record;
        let reject = |reason: &str| RegistryError::NotValidated { tool_id: rec.tool_id.clone(), reason: reason.into() };
        if rec.outcome != Outcome::Success {
            return Err(reject("build attempt did not succeed"));
        }
        if rec.validation_exit != Some(ExitStatus::Code(0)) {
            return Err(reject("validation command did not pass"));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(RegistryError::BadThreshold(threshold));
        }
        let (domains, pending) = match assign_domains(reg.description, taxonomy, embedder, threshold) {
            Ok(d) => (d, false),
            Err(RegistryError::Client(e)) => {
                tracing::warn!(tool_id = %rec.tool_id, error = %e, "domain assignment failed; stored as pending");
                (Vec::new(), true)
            }
            Err(e) => return Err(e),
        };
        let mut tags = reg.tags.to_vec();
        tags.sort();
        tags.dedup();
        let entry = ToolEntry {
            schema_version: SCHEMA_VERSION,
            tool_id: rec.tool_id.clone(),
            name: reg.name.to_string(),
            description: reg.description.to_string(),
            tags,
            language: rec.primary_language.clone(),
            entrypoint: reg.spec.entrypoint.clone(),
            image_digest: reg.image_digest.to_string(),
            domains,
            domains_pending: pending,
            validated: true,
            registered_at: reg.registered_at,
        };
        if let Some(existing) = self.entries.get(&entry.tool_id) {
            if existing.same_content(&entry) {
                return Ok(existing.clone());
            }
            return Err(RegistryError::Conflict(entry.tool_id));
        }
        self.append(&entry)?;
        self.entries.insert(entry.tool_id.clone(), entry.clone());
        Ok(entry)
    }

    fn append(&self, entry: &ToolEntry) -> Result<(), RegistryError> {
        let io = |source| RegistryError::Io { path: self.path.clone(), source };
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        let mut f: File = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        f.write_all(line.as_bytes()).map_err(io)?;
        f.flush().map_err(io)
    }

    /// Entries ranked by similarity of the query to their descriptions.
    pub fn search(
        &self,
        query: &str,
        filter: &SearchFilter,
        embedder: &dyn Embedder,
    ) -> Result<Vec<SearchHit>, RegistryError> {
        let q = embedder.embed_text(query)?;
        let mut hits = Vec::new();
        for e in self.entries.values().filter(|e| filter.accepts(e)) {
            let v = embedder.embed_text(&e.description)?;
            hits.push(SearchHit { score: cosine(&q, &v), entry: e.clone() });
        }
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entry.tool_id.cmp(&b.entry.tool_id)));
        Ok(hits)
    }

    pub fn manifest(&self, tool_id: &str) -> Result<Manifest, RegistryError> {
        let e = self.entries.get(tool_id).ok_or_else(|| RegistryError::UnknownTool(tool_id.into()))?;
        Ok(Manifest {
            tool_id: e.tool_id.clone(),
            name: e.name.clone(),
            description: e.description.clone(),
            entrypoint: e.entrypoint.clone(),
            image_digest: e.image_digest.clone(),
            domains: e.domains.clone(),
            schema_version: SCHEMA_VERSION,
        })
    }

    /// Pretty-printed manifest JSON with a trailing newline.
    pub fn export_manifest(&self, tool_id: &str) -> Result<String, RegistryError> {
        let mut s = serde_json::to_string_pretty(&self.manifest(tool_id)?).expect("manifest serializes");
        s.push('\n');
        Ok(s)
    }

    /// Per-domain tool counts (a tool counts once for each of its domains).
    pub fn domain_counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for e in self.entries.values() {
            let ids: BTreeSet<&str> = e.domains.iter().map(|d| d.domain_id.as_str()).collect();
            for id in ids {
                *out.entry(id.to_string()).or_insert(0) += 1;
            }
        }
        out
    }
}

//! Repository intake: snapshot ingest, build-artifact inventory, language
//! profile and the evidence bundle consumed by recipe inference.

mod evidence;
mod inventory;
mod languages;
mod snapshot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::ClientError;

pub use evidence::{
    build_evidence, has_install_heading, supplemental_query, truncate_text, EvidenceBundle,
    EvidenceOptions, ManifestExcerpt, TextDoc,
};
pub use inventory::{
    classify_file, inventory_artifacts, manifest_kind, ArtifactInventory, FileKind, ManifestKind,
    SpecTier,
};
pub use languages::{detect_languages, language_for_path, primary_language, LanguageProfile};
pub use snapshot::{ingest, FileEntry, IngestOptions, RepoSnapshot, SourceLocation};

pub const EVIDENCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("clone failed: {0}")]
    Clone(#[source] ClientError),
    #[error("repository exceeds size cap: {bytes} > {cap} bytes")]
    TooLarge { bytes: u64, cap: u64 },
    #[error("source not found: {0}")]
    SourceMissing(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AnalyzeError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        AnalyzeError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// What `analyze` writes: the evidence bundle next to the artifact inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDocument {
    pub schema_version: u32,
    pub evidence: EvidenceBundle,
    pub inventory: ArtifactInventory,
}

/// Inventory and evidence for an ingested snapshot.
pub fn analyze(snapshot: &RepoSnapshot, clients: Option<&crate::clients::Clients>, opts: &EvidenceOptions) -> AnalysisDocument {
    let inventory = inventory_artifacts(snapshot);
    let evidence = build_evidence(snapshot, &inventory, clients, opts);
    AnalysisDocument { schema_version: EVIDENCE_SCHEMA_VERSION, evidence, inventory }
}

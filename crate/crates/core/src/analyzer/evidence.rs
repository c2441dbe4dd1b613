use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::inventory::{ArtifactInventory, FileKind, ManifestKind};
use super::languages::{detect_languages, primary_language, LanguageProfile};
use super::snapshot::RepoSnapshot;
use super::EVIDENCE_SCHEMA_VERSION;
use crate::clients::{Clients, Snippet};

/// A repository text with its origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextDoc {
    pub path: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestExcerpt {
    pub kind: ManifestKind,
    pub path: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

/// Everything recipe inference may look at for one repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub schema_version: u32,
    pub repo_id: String,
    pub name: String,
    pub commit_id: String,
    pub description: String,
    pub primary_language: String,
    /// Every path in the snapshot, sorted.
    pub file_index: Vec<String>,
    pub readme: Option<TextDoc>,
    pub install_docs: Vec<TextDoc>,
    pub container_recipes: Vec<TextDoc>,
    pub ci_workflows: Vec<TextDoc>,
    pub manifest_excerpts: Vec<ManifestExcerpt>,
    pub supplemental: Vec<Snippet>,
    pub language_profile: LanguageProfile,
    #[serde(default)]
    pub supplemental_requested: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplemental_error: Option<String>,
}

impl EvidenceBundle {
    pub fn has_file(&self, path: &str) -> bool {
        self.file_index.binary_search_by(|p| p.as_str().cmp(path)).is_ok()
    }

    pub fn manifest(&self, kind: ManifestKind) -> Option<&ManifestExcerpt> {
        // Root-level manifests first.
        self.manifest_excerpts
            .iter()
            .filter(|m| m.kind == kind)
            .min_by_key(|m| (m.path.matches('/').count(), m.path.clone()))
    }

    /// Text of a file in the bundle, from whichever section holds it.
    pub fn text_of(&self, path: &str) -> Option<&str> {
        self.manifest_excerpts
            .iter()
            .map(|m| (&m.path, &m.text))
            .chain(self.readme.iter().map(|d| (&d.path, &d.text)))
            .chain(self.install_docs.iter().map(|d| (&d.path, &d.text)))
            .chain(self.container_recipes.iter().map(|d| (&d.path, &d.text)))
            .chain(self.ci_workflows.iter().map(|d| (&d.path, &d.text)))
            .find(|(p, _)| p.as_str() == path)
            .map(|(_, t)| t.as_str())
    }

    /// No repository text and no manifests at all.
    pub fn is_empty(&self) -> bool {
        self.readme.is_none()
            && self.install_docs.is_empty()
            && self.container_recipes.is_empty()
            && self.manifest_excerpts.is_empty()
            && self.supplemental.is_empty()
    }

    /// Evidence reference for a path or URL, if the bundle can resolve it.
    pub fn resolves(&self, reference: &str) -> bool {
        self.has_file(reference) || self.supplemental.iter().any(|s| s.source_url == reference)
    }
}

#[derive(Debug, Clone)]
pub struct EvidenceOptions {
    pub file_cap_bytes: usize,
    pub supplemental_max_results: usize,
}

impl Default for EvidenceOptions {
    fn default() -> Self {
        Self {
            file_cap_bytes: 64 * 1024,
            supplemental_max_results: 3,
        }
    }
}

/// Cuts `text` to at most `cap` bytes on a char boundary and appends a marker.
pub fn truncate_text(text: &str, cap: usize) -> (String, bool) {
    if text.len() <= cap {
        return (text.to_string(), false);
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    (
        format!("{}\n[truncated: {} of {} bytes kept]\n", &text[..end], end, text.len()),
        true,
    )
}

fn install_heading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^\s{0,3}#{1,6}\s*(installation|installing|install|setup|set up|getting started|quick ?start|building|build|compiling|compilation|compile)\b").unwrap()
    })
}

/// True when the readme has a markdown or reStructuredText heading about
/// installation or building.
pub fn has_install_heading(readme: &str) -> bool {
    if install_heading_re().is_match(readme) {
        return true;
    }
    let lines: Vec<&str> = readme.lines().collect();
    lines.windows(2).any(|w| {
        let title = w[0].trim().to_lowercase();
        let under = w[1].trim();
        under.len() >= 3
            && under.chars().all(|c| matches!(c, '=' | '-' | '~' | '^'))
            && ["install", "setup", "getting started", "build", "compil"]
                .iter()
                .any(|k| title.starts_with(k))
    })
}

pub fn supplemental_query(snapshot: &RepoSnapshot) -> String {
    format!("install {}", snapshot.repo.name())
}

fn doc(snapshot: &RepoSnapshot, path: &str, cap: usize) -> Option<TextDoc> {
    let text = snapshot.read_text(path)?;
    let (text, truncated) = truncate_text(&text, cap);
    Some(TextDoc {
        path: path.to_string(),
        text,
        truncated,
    })
}

fn is_install_doc(path: &str) -> bool {
    let lower = path.to_ascii_lowercase();
    let name = lower.rsplit('/').next().unwrap_or(&lower);
    name.starts_with("install")
        || ((lower.starts_with("docs/") || lower.starts_with("doc/"))
            && (name.contains("install") || name.contains("build") || name.contains("setup")))
}

/// Assembles evidence from the snapshot and, when the repository itself is
/// insufficient, supplemental search results. Search failures degrade to
/// repository-only evidence and are recorded in `supplemental_error`.
pub fn build_evidence(
    snapshot: &RepoSnapshot,
    inventory: &ArtifactInventory,
    clients: Option<&Clients>,
    opts: &EvidenceOptions,
) -> EvidenceBundle {
    let cap = opts.file_cap_bytes;
    let readme_path = snapshot
        .file_index
        .iter()
        .filter(|f| !f.path.contains('/') && f.path.to_ascii_uppercase().starts_with("README"))
        .map(|f| f.path.clone())
        .min();
    let readme = readme_path.and_then(|p| doc(snapshot, &p, cap));

    let install_docs = snapshot
        .file_index
        .iter()
        .filter(|f| f.kind == FileKind::Doc && is_install_doc(&f.path))
        .filter_map(|f| doc(snapshot, &f.path, cap))
        .collect();
    let container_recipes = snapshot
        .file_index
        .iter()
        .filter(|f| f.kind == FileKind::ContainerRecipe && !f.symlink)
        .filter_map(|f| doc(snapshot, &f.path, cap))
        .collect::<Vec<_>>();
    let ci_workflows = snapshot
        .file_index
        .iter()
        .filter(|f| f.kind == FileKind::Ci && !f.symlink)
        .filter_map(|f| doc(snapshot, &f.path, cap))
        .collect();
    let manifest_excerpts = inventory
        .manifests
        .iter()
        .filter(|(_, k)| k.is_build_system())
        .filter_map(|(p, k)| {
            let d = doc(snapshot, p, cap)?;
            Some(ManifestExcerpt {
                kind: *k,
                path: d.path,
                text: d.text,
                truncated: d.truncated,
            })
        })
        .collect();

    let language_profile = detect_languages(snapshot);
    let insufficient = container_recipes.is_empty()
        && inventory.artifact_count <= 1
        && !readme.as_ref().is_some_and(|r| has_install_heading(&r.text));

    let mut supplemental = Vec::new();
    let mut supplemental_error = None;
    if insufficient {
        match clients {
            Some(c) => match c.fetch_supplemental(&supplemental_query(snapshot)) {
                Ok(mut snippets) => {
                    snippets.truncate(opts.supplemental_max_results);
                    for s in &mut snippets {
                        s.text = truncate_text(&s.text, cap).0;
                    }
                    supplemental = snippets;
                }
                Err(e) => supplemental_error = Some(e.to_string()),
            },
            None => supplemental_error = Some("no search client configured".into()),
        }
    }

    EvidenceBundle {
        schema_version: EVIDENCE_SCHEMA_VERSION,
        repo_id: snapshot.repo.repo_id.clone(),
        name: snapshot.repo.name().to_string(),
        commit_id: snapshot.commit_id.clone(),
        description: snapshot.repo.description.clone(),
        primary_language: primary_language(&language_profile),
        file_index: snapshot.paths().map(str::to_string).collect(),
        readme,
        install_docs,
        container_recipes,
        ci_workflows,
        manifest_excerpts,
        supplemental,
        language_profile,
        supplemental_requested: insufficient,
        supplemental_error,
    }
}

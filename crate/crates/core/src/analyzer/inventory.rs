use serde::{Deserialize, Serialize};

use super::languages::language_for_path;
use super::snapshot::RepoSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Source,
    Doc,
    Manifest,
    Ci,
    ContainerRecipe,
    Data,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestKind {
    PythonSetup,
    PythonProject,
    PythonRequirements,
    Make,
    Cmake,
    Autotools,
    NodePackage,
    RustManifest,
    JavaBuild,
    ContainerRecipe,
    CiWorkflow,
    Other,
}

impl ManifestKind {
    /// Kinds counted by the specification-uncertainty proxy.
    pub fn is_build_system(self) -> bool {
        !matches!(self, ManifestKind::CiWorkflow | ManifestKind::ContainerRecipe)
    }
}

/// Specification-uncertainty tier derived from the artifact count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecTier {
    Unspecified,
    Single,
    Multi,
}

impl SpecTier {
    pub fn from_count(count: u32) -> Self {
        match count {
            0 => SpecTier::Unspecified,
            1 => SpecTier::Single,
            _ => SpecTier::Multi,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpecTier::Unspecified => "unspecified",
            SpecTier::Single => "single",
            SpecTier::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactInventory {
    pub manifests: Vec<(String, ManifestKind)>,
    pub artifact_count: u32,
}

impl ArtifactInventory {
    pub fn tier(&self) -> SpecTier {
        SpecTier::from_count(self.artifact_count)
    }

    pub fn has(&self, kind: ManifestKind) -> bool {
        self.manifests.iter().any(|(_, k)| *k == kind)
    }
}

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Build-system role of a path, by file name and location.
pub fn manifest_kind(path: &str) -> Option<ManifestKind> {
    let name = file_name(path);
    let lower = name.to_ascii_lowercase();
    if path.starts_with(".github/workflows/") && (lower.ends_with(".yml") || lower.ends_with(".yaml")) {
        return Some(ManifestKind::CiWorkflow);
    }
    match lower.as_str() {
        ".gitlab-ci.yml" | ".travis.yml" | "azure-pipelines.yml" | "jenkinsfile" | ".circleci/config.yml" => {
            return Some(ManifestKind::CiWorkflow)
        }
        "dockerfile" | "containerfile" => return Some(ManifestKind::ContainerRecipe),
        "setup.py" | "setup.cfg" => return Some(ManifestKind::PythonSetup),
        "pyproject.toml" => return Some(ManifestKind::PythonProject),
        "makefile" | "gnumakefile" => return Some(ManifestKind::Make),
        "cmakelists.txt" => return Some(ManifestKind::Cmake),
        "configure.ac" | "configure.in" | "makefile.am" | "configure" => return Some(ManifestKind::Autotools),
        "package.json" => return Some(ManifestKind::NodePackage),
        "cargo.toml" => return Some(ManifestKind::RustManifest),
        "pom.xml" | "build.gradle" | "build.gradle.kts" => return Some(ManifestKind::JavaBuild),
        "environment.yml" | "environment.yaml" | "meson.build" | "description" | "project.toml" | "pixi.toml" => {
            return Some(ManifestKind::Other)
        }
        _ => {}
    }
    if path.starts_with(".circleci/") && lower == "config.yml" {
        return Some(ManifestKind::CiWorkflow);
    }
    if lower.starts_with("dockerfile.") || lower.ends_with(".dockerfile") {
        return Some(ManifestKind::ContainerRecipe);
    }
    let in_req_dir = path.starts_with("requirements/") && lower.ends_with(".txt");
    if (lower.starts_with("requirements") && lower.ends_with(".txt")) || in_req_dir {
        return Some(ManifestKind::PythonRequirements);
    }
    None
}

const DATA_EXT: &[&str] = &[
    "csv", "tsv", "h5", "hdf5", "nc", "npy", "npz", "dat", "pdb", "xyz", "fasta", "fa", "fastq", "vcf",
    "mat", "pkl", "parquet", "zip", "gz", "tar", "bz2", "png", "jpg", "jpeg", "gif", "svg", "tif", "tiff",
    "bin", "cif", "mol2", "sdf", "json",
];

const DOC_EXT: &[&str] = &["md", "rst", "adoc", "txt", "tex", "html", "pdf"];

pub fn classify_file(path: &str) -> FileKind {
    match manifest_kind(path) {
        Some(ManifestKind::CiWorkflow) => return FileKind::Ci,
        Some(ManifestKind::ContainerRecipe) => return FileKind::ContainerRecipe,
        Some(_) => return FileKind::Manifest,
        None => {}
    }
    let name = file_name(path);
    let upper = name.to_ascii_uppercase();
    if ["README", "INSTALL", "LICENSE", "COPYING", "CHANGELOG", "AUTHORS", "NEWS", "CONTRIBUTING"]
        .iter()
        .any(|p| upper.starts_with(p))
    {
        return FileKind::Doc;
    }
    if language_for_path(path).is_some() {
        return FileKind::Source;
    }
    let ext = name.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase()).unwrap_or_default();
    if DOC_EXT.contains(&ext.as_str()) || path.starts_with("docs/") || path.starts_with("doc/") {
        return FileKind::Doc;
    }
    if DATA_EXT.contains(&ext.as_str()) {
        return FileKind::Data;
    }
    FileKind::Other
}

fn counts_for_proxy(path: &str, kind: ManifestKind) -> bool {
    if !kind.is_build_system() {
        return false;
    }
    !path.contains('/') || (kind == ManifestKind::PythonRequirements && path.starts_with("requirements/"))
}

/// Lists every manifest in the snapshot. The artifact count covers root-level
/// build-system manifests (plus a top-level `requirements/` directory); CI
/// workflows and container recipes are listed but not counted.
pub fn inventory_artifacts(snapshot: &RepoSnapshot) -> ArtifactInventory {
    inventory_from_paths(snapshot.file_index.iter().filter(|f| !f.symlink).map(|f| f.path.as_str()))
}

pub(crate) fn inventory_from_paths<'a>(paths: impl Iterator<Item = &'a str>) -> ArtifactInventory {
    let mut manifests: Vec<(String, ManifestKind)> = paths
        .filter_map(|p| manifest_kind(p).map(|k| (p.to_string(), k)))
        .collect();
    manifests.sort();
    let artifact_count = manifests.iter().filter(|(p, k)| counts_for_proxy(p, *k)).count() as u32;
    ArtifactInventory {
        manifests,
        artifact_count,
    }
}

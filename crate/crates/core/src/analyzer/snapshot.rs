use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::inventory::{classify_file, FileKind};
use super::AnalyzeError;
use crate::clients::{Clients, RepoMetadata};
use crate::digest::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub size: u64,
    pub kind: FileKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub symlink: bool,
}

/// Immutable checkout of one repository.
#[derive(Debug, Clone, PartialEq)]
pub struct RepoSnapshot {
    pub repo: RepoMetadata,
    pub checkout_path: PathBuf,
    pub commit_id: String,
    /// Sorted by path; covers every regular file and symlink outside `.git`.
    pub file_index: Vec<FileEntry>,
}

impl RepoSnapshot {
    pub fn has_file(&self, path: &str) -> bool {
        self.file_index.binary_search_by(|f| f.path.as_str().cmp(path)).is_ok()
    }

    pub fn read(&self, path: &str) -> Option<Vec<u8>> {
        let entry = self.file_index.iter().find(|f| f.path == path)?;
        if entry.symlink {
            return None;
        }
        fs::read(self.checkout_path.join(path)).ok()
    }

    pub fn read_text(&self, path: &str) -> Option<String> {
        self.read(path).map(|b| String::from_utf8_lossy(&b).into_owned())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.file_index.iter().map(|f| f.path.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum SourceLocation {
    Local(PathBuf),
    Remote(String),
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Parent directory for fresh snapshot roots.
    pub workspace: PathBuf,
    pub max_repo_bytes: u64,
}

impl IngestOptions {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        Self {
            workspace: workspace.into(),
            max_repo_bytes: 2 * 1024 * 1024 * 1024,
        }
    }
}

fn snapshot_dir(opts: &IngestOptions, repo: &RepoMetadata) -> PathBuf {
    let safe: String = repo
        .name()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    opts.workspace
        .join(format!("{}-{}", safe, &sha256_hex(&repo.repo_id)[..12]))
}

/// Materializes `source` into a fresh directory under the workspace and
/// indexes it. Symlinks are recorded but never followed.
pub fn ingest(
    repo: &RepoMetadata,
    source: &SourceLocation,
    clients: Option<&Clients>,
    opts: &IngestOptions,
) -> Result<RepoSnapshot, AnalyzeError> {
    let root = snapshot_dir(opts, repo);
    if root.exists() {
        fs::remove_dir_all(&root).map_err(|e| AnalyzeError::io(&root, e))?;
    }
    fs::create_dir_all(&opts.workspace).map_err(|e| AnalyzeError::io(&opts.workspace, e))?;
    match source {
        SourceLocation::Local(src) => {
            if !src.is_dir() {
                return Err(AnalyzeError::SourceMissing(src.display().to_string()));
            }
            copy_tree(src, &root, opts.max_repo_bytes)?;
        }
        SourceLocation::Remote(url) => {
            let clients = clients.ok_or_else(|| AnalyzeError::SourceMissing(format!("no cloner for {url}")))?;
            clients.clone_repo(url, &root).map_err(AnalyzeError::Clone)?;
        }
    }
    let file_index = match index_tree(&root, opts.max_repo_bytes) {
        Ok(idx) => idx,
        Err(e) => {
            let _ = fs::remove_dir_all(&root);
            return Err(e);
        }
    };
    let commit_id = git_head(&root).unwrap_or_else(|| tree_hash(&root, &file_index));
    Ok(RepoSnapshot {
        repo: repo.clone(),
        checkout_path: root,
        commit_id,
        file_index,
    })
}

fn is_git_dir(rel: &Path) -> bool {
    rel.components().next().is_some_and(|c| c.as_os_str() == ".git")
}

fn copy_tree(src: &Path, dest: &Path, cap: u64) -> Result<(), AnalyzeError> {
    fs::create_dir_all(dest).map_err(|e| AnalyzeError::io(dest, e))?;
    let mut total = 0u64;
    for entry in WalkDir::new(src).follow_links(false).sort_by_file_name() {
        let entry = entry.map_err(|e| AnalyzeError::io(src, e.into()))?;
        let rel = entry.path().strip_prefix(src).expect("walk stays under root");
        if rel.as_os_str().is_empty() {
            continue;
        }
        let target = dest.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            fs::create_dir_all(&target).map_err(|e| AnalyzeError::io(&target, e))?;
        } else if ft.is_symlink() {
            let link = fs::read_link(entry.path()).map_err(|e| AnalyzeError::io(entry.path(), e))?;
            #[cfg(unix)]
            std::os::unix::fs::symlink(&link, &target).map_err(|e| AnalyzeError::io(&target, e))?;
            #[cfg(not(unix))]
            let _ = link;
        } else {
            if !is_git_dir(rel) {
                total += entry.metadata().map(|m| m.len()).unwrap_or(0);
                if total > cap {
                    let _ = fs::remove_dir_all(dest);
                    return Err(AnalyzeError::TooLarge { bytes: total, cap });
                }
            }
            fs::copy(entry.path(), &target).map_err(|e| AnalyzeError::io(&target, e))?;
        }
    }
    Ok(())
}

fn index_tree(root: &Path, cap: u64) -> Result<Vec<FileEntry>, AnalyzeError> {
    let mut out = Vec::new();
    let mut total = 0u64;
    for entry in WalkDir::new(root).follow_links(false).sort_by_file_name() {
        let entry = entry.map_err(|e| AnalyzeError::io(root, e.into()))?;
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        if rel.as_os_str().is_empty() || is_git_dir(rel) || entry.file_type().is_dir() {
            continue;
        }
        let path = rel.to_string_lossy().replace('\\', "/");
        let symlink = entry.file_type().is_symlink();
        let size = if symlink {
            0
        } else {
            entry.metadata().map(|m| m.len()).unwrap_or(0)
        };
        total += size;
        if total > cap {
            return Err(AnalyzeError::TooLarge { bytes: total, cap });
        }
        out.push(FileEntry {
            kind: classify_file(&path),
            path,
            size,
            symlink,
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

fn git_head(root: &Path) -> Option<String> {
    let git = root.join(".git");
    let head = fs::read_to_string(git.join("HEAD")).ok()?;
    let head = head.trim();
    let Some(reference) = head.strip_prefix("ref: ") else {
        return Some(head.to_string());
    };
    if let Ok(sha) = fs::read_to_string(git.join(reference)) {
        return Some(sha.trim().to_string());
    }
    let packed = fs::read_to_string(git.join("packed-refs")).ok()?;
    packed.lines().find_map(|l| {
        let (sha, name) = l.split_once(' ')?;
        (name == reference).then(|| sha.to_string())
    })
}

/// Content hash over sorted `(path, file hash)` pairs, for trees without git
/// metadata.
fn tree_hash(root: &Path, index: &[FileEntry]) -> String {
    let mut acc = String::new();
    for f in index {
        let content = if f.symlink {
            fs::read_link(root.join(&f.path))
                .map(|l| l.to_string_lossy().into_owned().into_bytes())
                .unwrap_or_default()
        } else {
            fs::read(root.join(&f.path)).unwrap_or_default()
        };
        acc.push_str(&f.path);
        acc.push('\0');
        acc.push_str(&sha256_hex(&content));
        acc.push('\n');
    }
    format!("tree-{}", &sha256_hex(acc)[..40])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str) -> RepoMetadata {
        RepoMetadata {
            repo_id: id.into(),
            url: String::new(),
            license_id: "MIT".into(),
            primary_language: "unknown".into(),
            star_count: 0,
            is_archived: false,
            description: String::new(),
            topics: vec![],
        }
    }

    fn write(root: &Path, rel: &str, body: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, body).unwrap();
    }

    #[test]
    fn indexes_five_files_with_kinds() {
        let src = tempfile::tempdir().unwrap();
        let ws = tempfile::tempdir().unwrap();
        write(src.path(), "README.md", "# x\n");
        write(src.path(), "setup.py", "from setuptools import setup\n");
        write(src.path(), "pkg/core.py", "x = 1\n");
        write(src.path(), "data/in.csv", "a,b\n");
        write(src.path(), ".github/workflows/ci.yml", "on: push\n");
        write(src.path(), ".git/HEAD", "0123456789abcdef0123456789abcdef01234567\n");
        let snap = ingest(
            &meta("h/o/r"),
            &SourceLocation::Local(src.path().into()),
            None,
            &IngestOptions::new(ws.path()),
        )
        .unwrap();
        let kinds: Vec<(&str, FileKind)> = snap.file_index.iter().map(|f| (f.path.as_str(), f.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (".github/workflows/ci.yml", FileKind::Ci),
                ("README.md", FileKind::Doc),
                ("data/in.csv", FileKind::Data),
                ("pkg/core.py", FileKind::Source),
                ("setup.py", FileKind::Manifest),
            ]
        );
        assert_eq!(snap.commit_id, "0123456789abcdef0123456789abcdef01234567");
        assert!(snap.checkout_path.starts_with(ws.path()));
        assert_eq!(snap.read_text("pkg/core.py").unwrap(), "x = 1\n");
    }

    #[test]
    fn empty_repository() {
        let src = tempfile::tempdir().unwrap();
        let ws = tempfile::tempdir().unwrap();
        let snap = ingest(
            &meta("h/o/empty"),
            &SourceLocation::Local(src.path().into()),
            None,
            &IngestOptions::new(ws.path()),
        )
        .unwrap();
        assert!(snap.file_index.is_empty());
        assert!(snap.commit_id.starts_with("tree-"));
    }

    #[test]
    fn size_cap_is_resource_error() {
        let src = tempfile::tempdir().unwrap();
        let ws = tempfile::tempdir().unwrap();
        write(src.path(), "big.bin", &"x".repeat(2048));
        let mut opts = IngestOptions::new(ws.path());
        opts.max_repo_bytes = 1024;
        let err = ingest(&meta("h/o/big"), &SourceLocation::Local(src.path().into()), None, &opts).unwrap_err();
        assert!(matches!(err, AnalyzeError::TooLarge { .. }));
    }

    #[cfg(unix)]
    #[test]
    fn symlinks_recorded_not_followed() {
        let src = tempfile::tempdir().unwrap();
        let outside = tempfile::tempdir().unwrap();
        let ws = tempfile::tempdir().unwrap();
        write(outside.path(), "secret.txt", "do not read");
        write(src.path(), "main.py", "print(1)\n");
        std::os::unix::fs::symlink(outside.path().join("secret.txt"), src.path().join("link.txt")).unwrap();
        let snap = ingest(
            &meta("h/o/ln"),
            &SourceLocation::Local(src.path().into()),
            None,
            &IngestOptions::new(ws.path()),
        )
        .unwrap();
        let link = snap.file_index.iter().find(|f| f.path == "link.txt").unwrap();
        assert!(link.symlink);
        assert_eq!(link.size, 0);
        assert!(snap.read("link.txt").is_none());
    }

    #[test]
    fn tree_hash_is_content_addressed() {
        let a = tempfile::tempdir().unwrap();
        let ws = tempfile::tempdir().unwrap();
        write(a.path(), "x.py", "1");
        let opts = IngestOptions::new(ws.path());
        let s1 = ingest(&meta("h/o/a"), &SourceLocation::Local(a.path().into()), None, &opts).unwrap();
        let s2 = ingest(&meta("h/o/a"), &SourceLocation::Local(a.path().into()), None, &opts).unwrap();
        assert_eq!(s1.commit_id, s2.commit_id);
        write(a.path(), "x.py", "2");
        let s3 = ingest(&meta("h/o/a"), &SourceLocation::Local(a.path().into()), None, &opts).unwrap();
        assert_ne!(s1.commit_id, s3.commit_id);
    }
}

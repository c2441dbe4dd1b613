use std::path::{Path, PathBuf};
use std::process::Command;

use super::{ClientError, RepoCloner};

/// Shallow clones through the `git` command-line client.
#[derive(Debug, Clone)]
pub struct GitCli {
    pub binary: PathBuf,
}

impl Default for GitCli {
    fn default() -> Self {
        Self {
            binary: PathBuf::from("git"),
        }
    }
}

impl GitCli {
    pub fn clone_args(url: &str, dest: &Path) -> Vec<String> {
        vec![
            "clone".into(),
            "--depth".into(),
            "1".into(),
            "--quiet".into(),
            url.into(),
            dest.to_string_lossy().into_owned(),
        ]
    }
}

impl RepoCloner for GitCli {
    fn clone_repo(&self, url: &str, dest: &Path) -> Result<(), ClientError> {
        let out = Command::new(&self.binary)
            .args(Self::clone_args(url, dest))
            .env("GIT_TERMINAL_PROMPT", "0")
            .output()
            .map_err(|e| ClientError::Network(format!("cannot run {}: {e}", self.binary.display())))?;
        if out.status.success() {
            return Ok(());
        }
        let stderr = String::from_utf8_lossy(&out.stderr);
        if stderr.contains("Authentication failed") || stderr.contains("could not read Username") {
            return Err(ClientError::Auth(stderr.trim().to_string()));
        }
        // A partially written destination would make a retry fail for the wrong reason.
        let _ = std::fs::remove_dir_all(dest);
        Err(ClientError::Network(stderr.trim().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn args_are_shallow_and_quiet() {
        let args = GitCli::clone_args("https://example.org/a/b.git", Path::new("/tmp/x"));
        assert_eq!(args[..4], ["clone", "--depth", "1", "--quiet"]);
        assert_eq!(args[4], "https://example.org/a/b.git");
    }

    #[test]
    fn missing_binary_is_network_error() {
        let git = GitCli {
            binary: PathBuf::from("/nonexistent/git-binary"),
        };
        let dir = tempfile::tempdir().unwrap();
        let err = git.clone_repo("https://example.org/x.git", &dir.path().join("x")).unwrap_err();
        assert!(matches!(err, ClientError::Network(_)));
    }
}

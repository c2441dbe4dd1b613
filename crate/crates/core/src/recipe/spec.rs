use std::fmt;

use serde::{Deserialize, Serialize};

use super::shell::interactive_violation;
use super::SpecError;
use crate::digest::sha256_hex;

const APT_PREFIX: &str = "apt-get update && apt-get install -y --no-install-recommends ";
const APT_SUFFIX: &str = " && rm -rf /var/lib/apt/lists/*";
const VALIDATE_PREFIX: &str = "# validate ";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub name: String,
    pub tag: String,
}

impl ImageRef {
    pub fn new(name: impl Into<String>, tag: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            tag: tag.into(),
        }
    }

    /// Splits `name:tag`; a missing tag yields an empty one.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        // A colon followed by a slash belongs to a registry port, not a tag.
        match s.rsplit_once(':') {
            Some((n, t)) if !t.contains('/') => Self::new(n, t),
            _ => Self::new(s, ""),
        }
    }

    pub fn is_pinned(&self) -> bool {
        !self.tag.is_empty() && self.tag != "latest"
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.tag)
    }
}

/// A single-stage container recipe in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BuildSpec {
    pub base_image: ImageRef,
    #[serde(default)]
    pub system_packages: Vec<String>,
    #[serde(default)]
    pub env_vars: Vec<(String, String)>,
    pub copy_source: bool,
    pub workdir: String,
    #[serde(default)]
    pub build_steps: Vec<String>,
    pub entrypoint: Vec<String>,
    pub validate_cmd: Vec<String>,
}

fn is_image_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '.' | '_' | '-' | '/' | ':'))
        && !s.starts_with(['.', '-', '/', ':'])
        && !s.ends_with(['/', ':'])
}

fn is_tag(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 128
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
        && !s.starts_with(['.', '-'])
}

fn is_package(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '+' | '-' | '=' | ':' | '~' | '_'))
        && !s.starts_with('-')
}

fn is_env_key(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !s.starts_with(|c: char| c.is_ascii_digit())
}

fn is_env_value(s: &str) -> bool {
    s.chars().all(|c| !c.is_control() && c != '"' && c != '\\')
}

fn is_path(s: &str) -> bool {
    s.starts_with('/') && !s.chars().any(|c| c.is_whitespace() || c.is_control() || c == '"')
}

fn is_step(s: &str) -> bool {
    !s.is_empty() && s.trim() == s && !s.chars().any(|c| c.is_control())
}

fn is_argv(v: &[String]) -> bool {
    !v.is_empty() && !v[0].is_empty() && v.iter().all(|a| !a.chars().any(|c| c.is_control()))
}

impl BuildSpec {
    /// Checks every invariant the canonical form relies on.
    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |field: &str, msg: String| Err(SpecError::Invalid { field: field.to_string(), msg });
        if !is_image_name(&self.base_image.name) {
            return bad("base_image.name", format!("invalid image name {:?}", self.base_image.name));
        }
        if !self.base_image.is_pinned() {
            return bad("base_image.tag", "tag must be pinned (not empty or \"latest\")".into());
        }
        if !is_tag(&self.base_image.tag) {
            return bad("base_image.tag", format!("invalid tag {:?}", self.base_image.tag));
        }
        for (i, p) in self.system_packages.iter().enumerate() {
            if !is_package(p) {
                return bad(&format!("system_packages[{i}]"), format!("invalid package {p:?}"));
            }
        }
        for (i, (k, v)) in self.env_vars.iter().enumerate() {
            if !is_env_key(k) {
                return bad(&format!("env_vars[{i}]"), format!("invalid key {k:?}"));
            }
            if !is_env_value(v) {
                return bad(&format!("env_vars[{i}]"), format!("value of {k} has quotes, backslashes or control characters"));
            }
        }
        if !is_path(&self.workdir) {
            return bad("workdir", format!("workdir must be an absolute path, got {:?}", self.workdir));
        }
        for (i, s) in self.build_steps.iter().enumerate() {
            if !is_step(s) {
                return bad(&format!("build_steps[{i}]"), "steps are single trimmed non-empty lines".into());
            }
            if let Some(why) = interactive_violation(s) {
                return bad(&format!("build_steps[{i}]"), format!("interactive step: {why}"));
            }
        }
        if !is_argv(&self.entrypoint) {
            return bad("entrypoint", "entrypoint must be a non-empty command vector".into());
        }
        if !is_argv(&self.validate_cmd) {
            return bad("validate_cmd", "validate_cmd must be a non-empty command vector".into());
        }
        Ok(())
    }

    /// Canonical recipe text. LF line endings, one directive per line, field
    /// order fixed; the final line is a comment carrying the validation command.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("FROM {}\n", self.base_image));
        if !self.system_packages.is_empty() {
            out.push_str(&format!("RUN {APT_PREFIX}{}{APT_SUFFIX}\n", self.system_packages.join(" ")));
        }
        for (k, v) in &self.env_vars {
            out.push_str(&format!("ENV {k}=\"{v}\"\n"));
        }
        if self.copy_source {
            out.push_str(&format!("COPY . {}\n", self.workdir));
        }
        out.push_str(&format!("WORKDIR {}\n", self.workdir));
        for s in &self.build_steps {
            out.push_str(&format!("RUN {s}\n"));
        }
        out.push_str(&format!("ENTRYPOINT {}\n", json_argv(&self.entrypoint)));
        out.push_str(&format!("{VALIDATE_PREFIX}{}\n", json_argv(&self.validate_cmd)));
        out
    }

    /// Content hash of the canonical rendering.
    pub fn digest(&self) -> String {
        sha256_hex(self.render())
    }

    /// Strict inverse of [`BuildSpec::render`].
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let err = |line: usize, msg: &str| SpecError::Parse { line, msg: msg.to_string() };
        if !text.ends_with('\n') {
            return Err(err(text.lines().count().max(1), "missing final newline"));
        }
        if text.contains('\r') {
            return Err(err(1, "CR characters are not allowed"));
        }
        let lines: Vec<&str> = text[..text.len() - 1].split('\n').collect();
        let mut it = lines.iter().enumerate().map(|(i, l)| (i + 1, *l)).peekable();

        let (n, first) = it.next().ok_or_else(|| err(1, "empty recipe"))?;
        let base = first.strip_prefix("FROM ").ok_or_else(|| err(n, "expected FROM"))?;
        let base_image = ImageRef::parse(base);

        let mut system_packages = Vec::new();
        if let Some((n, l)) = it.peek().copied() {
            if let Some(rest) = l.strip_prefix("RUN ").and_then(|r| r.strip_prefix(APT_PREFIX)) {
                let pkgs = rest.strip_suffix(APT_SUFFIX).ok_or_else(|| err(n, "malformed package line"))?;
                system_packages = pkgs.split(' ').map(str::to_string).collect();
                if system_packages.iter().any(String::is_empty) {
                    return Err(err(n, "malformed package list"));
                }
                it.next();
            }
        }

        let mut env_vars = Vec::new();
        while let Some((n, l)) = it.peek().copied() {
            let Some(rest) = l.strip_prefix("ENV ") else { break };
            let (k, v) = rest.split_once('=').ok_or_else(|| err(n, "ENV without ="))?;
            let v = v
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .ok_or_else(|| err(n, "ENV value must be double-quoted"))?;
            env_vars.push((k.to_string(), v.to_string()));
            it.next();
        }

        let mut copy_source = false;
        let mut copy_dir = None;
        if let Some((_, l)) = it.peek().copied() {
            if let Some(dir) = l.strip_prefix("COPY . ") {
                copy_source = true;
                copy_dir = Some(dir.to_string());
                it.next();
            }
        }

        let (n, l) = it.next().ok_or_else(|| err(lines.len(), "expected WORKDIR"))?;
        let workdir = l.strip_prefix("WORKDIR ").ok_or_else(|| err(n, "expected WORKDIR"))?.to_string();
        if copy_dir.is_some_and(|d| d != workdir) {
            return Err(err(n, "COPY destination differs from WORKDIR"));
        }

        let mut build_steps = Vec::new();
        while let Some((_, l)) = it.peek().copied() {
            let Some(step) = l.strip_prefix("RUN ") else { break };
            build_steps.push(step.to_string());
            it.next();
        }

        let (n, l) = it.next().ok_or_else(|| err(lines.len(), "expected ENTRYPOINT"))?;
        let ep = l.strip_prefix("ENTRYPOINT ").ok_or_else(|| err(n, "expected ENTRYPOINT"))?;
        let entrypoint = parse_argv(ep).ok_or_else(|| err(n, "ENTRYPOINT must be a JSON string array"))?;

        let (n, l) = it.next().ok_or_else(|| err(lines.len(), "expected validate comment"))?;
        let vc = l.strip_prefix(VALIDATE_PREFIX).ok_or_else(|| err(n, "expected validate comment"))?;
        let validate_cmd = parse_argv(vc).ok_or_else(|| err(n, "validate command must be a JSON string array"))?;

        if let Some((n, _)) = it.next() {
            return Err(err(n, "trailing content"));
        }

        let spec = BuildSpec {
            base_image,
            system_packages,
            env_vars,
            copy_source,
            workdir,
            build_steps,
            entrypoint,
            validate_cmd,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub(crate) fn json_argv(v: &[String]) -> String {
    serde_json::to_string(v).expect("string vectors serialize")
}

pub(crate) fn parse_argv(s: &str) -> Option<Vec<String>> {
    let v: Vec<String> = serde_json::from_str(s).ok()?;
    // Only the compact form that `json_argv` emits is canonical.
    (json_argv(&v) == s).then_some(v)
}

//! Image construction and minimal-command validation.
//!
//! A [`Backend`] turns a canonical [`BuildSpec`] into an image and runs
//! commands inside it. [`build_image`] and [`validate_tool`] wrap a backend
//! with spec checks, phase-tagged log files and failure classification.

mod classify;
mod engine;
pub mod sim;

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::recipe::{BuildSpec, SpecError};

pub use classify::{classify_failure, PatternTable};
pub use engine::EngineBackend;
pub use sim::SimBackend;

const GIB: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    BuildProcess,
    Resource,
    DependencyInstall,
    Permission,
    Network,
    Unknown,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 6] = [
        FailureCategory::BuildProcess,
        FailureCategory::Resource,
        FailureCategory::DependencyInstall,
        FailureCategory::Permission,
        FailureCategory::Network,
        FailureCategory::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::BuildProcess => "build_process",
            FailureCategory::Resource => "resource",
            FailureCategory::DependencyInstall => "dependency_install",
            FailureCategory::Permission => "permission",
            FailureCategory::Network => "network",
            FailureCategory::Unknown => "unknown",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown failure category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Build,
    Validate,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Build => "[build]",
            Phase::Validate => "[validate]",
        }
    }
}

/// Process exit code, or the marker for a run killed at its time limit.
/// Serialized as an integer or the string `"timeout"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExitStatus {
    Code(i32),
    Timeout,
}

impl ExitStatus {
    pub fn is_success(self) -> bool {
        self == ExitStatus::Code(0)
    }
}

impl fmt::Display for ExitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExitStatus::Code(c) => write!(f, "{c}"),
            ExitStatus::Timeout => f.write_str("timeout"),
        }
    }
}

impl Serialize for ExitStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExitStatus::Code(c) => s.serialize_i32(*c),
            ExitStatus::Timeout => s.serialize_str("timeout"),
        }
    }
}

impl<'de> Deserialize<'de> for ExitStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Code(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Code(c) => i32::try_from(c)
                .map(ExitStatus::Code)
                .map_err(|_| serde::de::Error::custom("exit code out of range")),
            Raw::Text(t) if t == "timeout" => Ok(ExitStatus::Timeout),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected an exit code or \"timeout\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionLimits {
    pub cpu_slots: u32,
    pub memory_bytes: u64,
    pub disk_bytes: u64,
    pub build_timeout_s: u64,
    pub validate_timeout_s: u64,
    /// Time allowed between the timeout signal and a forced kill.
    pub grace_s: u64,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            cpu_slots: 2,
            memory_bytes: 8 * GIB,
            disk_bytes: 20 * GIB,
            build_timeout_s: 3600,
            validate_timeout_s: 300,
            grace_s: 10,
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), ExecError> {
        let bad = |m: &str| Err(ExecError::InvalidLimits(m.to_string()));
        if self.cpu_slots == 0 || self.memory_bytes == 0 || self.disk_bytes == 0 {
            return bad("cpu_slots, memory_bytes and disk_bytes must be positive");
        }
        if self.build_timeout_s == 0 || self.validate_timeout_s == 0 {
            return bad("timeouts must be positive");
        }
        if self.validate_timeout_s > self.build_timeout_s {
            return bad("validate_timeout_s must not exceed build_timeout_s");
        }
        Ok(())
    }

    pub fn with_memory(&self, memory_bytes: u64) -> Self {
        Self { memory_bytes, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildResult {
    pub outcome: Outcome,
    #[serde(default)]
    pub failure_category: Option<FailureCategory>,
    #[serde(default)]
    pub image_digest: Option<String>,
    pub build_duration_s: f64,
    pub log_path: PathBuf,
    pub exit_status: ExitStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub passed: bool,
    pub exit_status: ExitStatus,
    pub duration_s: f64,
    pub log_excerpt: String,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("spec rejected before build: {0}")]
    InvalidSpec(#[from] SpecError),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("backend unavailable: {0}")]
    Infrastructure(String),
    #[error("image {0} not found on backend")]
    MissingImage(String),
    #[error("no failure to classify in {0:?} phase (exit status 0)")]
    NothingToClassify(Phase),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExecError {
    /// Errors that say nothing about the tool itself.
    pub fn is_infrastructure(&self) -> bool {
        matches!(self, ExecError::Infrastructure(_) | ExecError::MissingImage(_) | ExecError::Io { .. })
    }
}

/// What a backend reports for one build.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBuild {
    pub exit: ExitStatus,
    pub log: String,
    pub duration_s: f64,
    pub image_digest: Option<String>,
}

/// What a backend reports for one command run.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    pub exit: ExitStatus,
    pub log: String,
    pub duration_s: f64,
}

/// A container engine, real or simulated.
///
/// Implementations enforce the time and memory limits themselves and report
/// a run cut off at its timeout as [`ExitStatus::Timeout`]. Validation runs
/// must not have network access.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn build(&self, spec: &BuildSpec, context: &Path, limits: &ExecutionLimits) -> Result<RawBuild, ExecError>;
    fn run(&self, image_digest: &str, cmd: &[String], limits: &ExecutionLimits) -> Result<RawRun, ExecError>;
}

fn tag_lines(phase: Phase, text: &str) -> String {
    let mut out = String::new();
    for line in text.lines() {
        out.push_str(phase.tag());
        if !line.is_empty() {
            out.push(' ');
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

fn write_log(path: &Path, text: &str, append: bool) -> Result<(), ExecError> {
    let io = |source| ExecError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

fn timeout_note(phase: Phase, limit_s: u64) -> String {
    let what = match phase {
        Phase::Build => "build",
        Phase::Validate => "validation",
    };
    format!("terminated: exceeded the {what} timeout of {limit_s} s")
}

/// Builds `spec` with `context` as the build context. The log is written to
/// `log_path` (replacing any earlier content) with `[build]` line tags.
pub fn build_image(
    spec: &BuildSpec,
    context: &Path,
    limits: &ExecutionLimits,
    backend: &dyn Backend,
    log_path: &Path,
) -> Result<BuildResult, ExecError> {
    spec.validate()?;
    limits.validate()?;
    let mut raw = backend.build(spec, context, limits)?;
    if raw.exit == ExitStatus::Timeout {
        if !raw.log.is_empty() && !raw.log.ends_with('\n') {
            raw.log.push('\n');
        }
        raw.log.push_str(&timeout_note(Phase::Build, limits.build_timeout_s));
        raw.log.push('\n');
        raw.duration_s = raw.duration_s.min((limits.build_timeout_s + limits.grace_s) as f64);
        raw.image_digest = None;
    }
    write_log(log_path, &tag_lines(Phase::Build, &raw.log), false)?;
    let result = if raw.exit.is_success() {
        let Some(digest) = raw.image_digest else {
            return Err(ExecError::Infrastructure(format!(
                "{} reported a successful build without an image",
                backend.name()
            )));
        };
        BuildResult {
            outcome: Outcome::Success,
            failure_category: None,
            image_digest: Some(digest),
            build_duration_s: raw.duration_s,
            log_path: log_path.to_path_buf(),
            exit_status: raw.exit,
        }
    } else {
        BuildResult {
            outcome: Outcome::Failure,
            failure_category: Some(classify_failure(&raw.log, &raw.exit, Phase::Build)?),
            image_digest: None,
            build_duration_s: raw.duration_s,
            log_path: log_path.to_path_buf(),
            exit_status: raw.exit,
        }
    };
    Ok(result)
}

const EXCERPT_LINES: usize = 20;

fn excerpt(log: &str) -> String {
    let lines: Vec<&str> = log.lines().collect();
    let start = lines.len().saturating_sub(EXCERPT_LINES);
    lines[start..].join("\n")
}

/// Runs `cmd` in the built image with networking disabled. Output is
/// appended to `log_path` with `[validate]` line tags.
pub fn validate_tool(
    image_digest: &str,
    cmd: &[String],
    limits: &ExecutionLimits,
    backend: &dyn Backend,
    log_path: &Path,
) -> Result<ValidationResult, ExecError> {
    limits.validate()?;
    if cmd.is_empty() || cmd[0].is_empty() {
        return Err(ExecError::InvalidSpec(SpecError::Invalid {
            field: "validate_cmd".into(),
            msg: "must be non-empty".into(),
        }));
    }
    let mut raw = backend.run(image_digest, cmd, limits)?;
    if raw.exit == ExitStatus::Timeout {
        if !raw.log.is_empty() && !raw.log.ends_with('\n') {
            raw.log.push('\n');
        }
        raw.log.push_str(&timeout_note(Phase::Validate, limits.validate_timeout_s));
        raw.log.push('\n');
        raw.duration_s = raw.duration_s.min((limits.validate_timeout_s + limits.grace_s) as f64);
    }
    let header = format!("$ {}\n", cmd.join(" "));
    write_log(log_path, &tag_lines(Phase::Validate, &(header + &raw.log)), true)?;
    Ok(ValidationResult {
        passed: raw.exit.is_success(),
        exit_status: raw.exit,
        duration_s: raw.duration_s,
        log_excerpt: excerpt(&raw.log),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_status_serde() {
        assert_eq!(serde_json::to_string(&ExitStatus::Code(2)).unwrap(), "2");
        assert_eq!(serde_json::to_string(&ExitStatus::Timeout).unwrap(), "\"timeout\"");
        assert_eq!(serde_json::from_str::<ExitStatus>("\"timeout\"").unwrap(), ExitStatus::Timeout);
        assert_eq!(serde_json::from_str::<ExitStatus>("-1").unwrap(), ExitStatus::Code(-1));
        assert!(serde_json::from_str::<ExitStatus>("\"hang\"").is_err());
    }

    #[test]
    fn limits_checks() {
        assert!(ExecutionLimits::default().validate().is_ok());
        let l = ExecutionLimits { validate_timeout_s: 4000, ..Default::default() };
        assert!(l.validate().is_err());
        let l = ExecutionLimits { cpu_slots: 0, ..Default::default() };
        assert!(l.validate().is_err());
    }

    #[test]
    fn log_tags() {
        assert_eq!(tag_lines(Phase::Build, "a\n\nb"), "[build] a\n[build]\n[build] b\n");
    }

    #[test]
    fn category_names_roundtrip() {
        for c in FailureCategory::ALL {
            assert_eq!(c.as_str().parse::<FailureCategory>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
    }
}

//! Pipeline configuration: one TOML file plus `DEPLOYFORGE_` environment
//! overrides.
//!
//! An override names a key path with `__` between table levels, e.g.
//! `DEPLOYFORGE_SCHEDULER__BUDGET__CPU_SLOTS=4`. Values are read as TOML
//! literals when they parse as one and as plain strings otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::ExecutionLimits;
use crate::funnel::FunnelConfig;
use crate::recipe::{BaseImages, DEFAULT_MAX_ROUNDS};
use crate::registry::DEFAULT_THRESHOLD;
use crate::scheduler::{Budget, CostTable};

pub const ENV_PREFIX: &str = "DEPLOYFORGE_";
const ENV_SEPARATOR: &str = "__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {msg}")]
    Parse { path: PathBuf, line: usize, column: usize, msg: String },
    #[error("{path}: unknown config keys: {}", keys.join(", "))]
    UnknownKeys { path: PathBuf, keys: Vec<String> },
    #[error("environment override {var}: {msg}")]
    Env { var: String, msg: String },
    #[error("invalid config value {field}: {msg}")]
    Invalid { field: String, msg: String },
}

/// Provider behind each external client. Only the offline fixture providers
/// ship with this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientsConfig {
    pub git_host: Provider,
    pub search: Provider,
    pub model: Provider,
    pub embedding: Provider,
    /// Fixture directory read by the mock providers.
    pub fixtures: PathBuf,
    /// Attempts per call, including the first.
    pub max_attempts: u32,
}

impl Default for ClientsConfig {
    fn default() -> Self {
        ClientsConfig {
            git_host: Provider::Mock,
            search: Provider::Mock,
            model: Provider::Mock,
            embedding: Provider::Mock,
            fixtures: PathBuf::from("fixtures"),
            max_attempts: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    Rule,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerKind {
    Rule,
    Model,
    /// Skip review; the first proposal is used as is.
    None,
}

impl std::str::FromStr for ProposerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rule" => Ok(ProposerKind::Rule),
            "model" => Ok(ProposerKind::Model),
            _ => Err(format!("unknown proposer {s:?} (expected rule or model)")),
        }
    }
}

impl std::str::FromStr for ReviewerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rule" => Ok(ReviewerKind::Rule),
            "model" => Ok(ReviewerKind::Model),
            "none" => Ok(ReviewerKind::None),
            _ => Err(format!("unknown reviewer {s:?} (expected rule, model or none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecipeConfig {
    pub proposer: ProposerKind,
    pub reviewer: ReviewerKind,
    pub max_rounds: u32,
    pub images: BaseImages,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        RecipeConfig {
            proposer: ProposerKind::Rule,
            reviewer: ReviewerKind::Rule,
            max_rounds: DEFAULT_MAX_ROUNDS,
            images: BaseImages::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Sim,
    Engine,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sim" => Ok(BackendKind::Sim),
            "engine" => Ok(BackendKind::Engine),
            _ => Err(format!("unknown backend {s:?} (expected sim or engine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Scripted outcomes for the simulated backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim_script: Option<PathBuf>,
    /// Container engine CLI.
    pub engine_program: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig { kind: BackendKind::Sim, sim_script: None, engine_program: "docker".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Builds running at once.
    pub workers: usize,
    pub budget: Budget,
    pub costs: CostTable,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { workers: 4, budget: Budget::default(), costs: CostTable::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistryConfig {
    pub path: PathBuf,
    pub taxonomy: PathBuf,
    pub threshold: f64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            path: PathBuf::from("out/registry.jsonl"),
            taxonomy: PathBuf::from("fixtures/taxonomy.json"),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub path: PathBuf,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { path: PathBuf::from("out/trace.jsonl") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Snapshots, build logs and the simulated image store live here.
    pub workspace: PathBuf,
    pub clients: ClientsConfig,
    pub funnel: FunnelConfig,
    pub recipe: RecipeConfig,
    pub limits: ExecutionLimits,
    pub backend: BackendConfig,
    pub scheduler: SchedulerConfig,
    pub registry: RegistryConfig,
    pub trace: TraceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workspace: PathBuf::from("work"),
            clients: ClientsConfig::default(),
            funnel: FunnelConfig::default(),
            recipe: RecipeConfig::default(),
            limits: ExecutionLimits::default(),
            backend: BackendConfig::default(),
            scheduler: SchedulerConfig::default(),
            registry: RegistryConfig::default(),
            trace: TraceConfig::default(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn parse_error(path: &Path, text: &str, e: toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    ConfigError::Parse { path: path.to_path_buf(), line, column, msg: e.message().trim().to_string() }
}

fn env_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, var: &str, value: &str) -> Result<(), ConfigError> {
    let keys: Vec<String> = var[ENV_PREFIX.len()..].split(ENV_SEPARATOR).map(str::to_lowercase).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Env { var: var.into(), msg: "empty key segment".into() });
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let next = cur.entry(k.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Env { var: var.into(), msg: format!("{k} is not a table") }),
        };
    }
    cur.insert(last.clone(), env_value(value));
    Ok(())
}

/// Parses config text, applies overrides and rejects unknown keys.
pub fn parse_config<I>(text: &str, origin: &Path, env: I) -> Result<PipelineConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    overrides.sort();
    let owned;
    let text = if overrides.is_empty() {
        text
    } else {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
        for (k, v) in &overrides {
            apply_override(&mut table, k, v)?;
        }
        owned = toml::to_string(&table).map_err(|e| ConfigError::Env {
            var: overrides[0].0.clone(),
            msg: e.to_string(),
        })?;
        owned.as_str()
    };
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let cfg: PipelineConfig = serde_ignored::deserialize(de, |p| unknown.push(p.to_string()))
        .map_err(|e| parse_error(origin, text, e))?;
    if !unknown.is_empty() {
        unknown.sort();
        return Err(ConfigError::UnknownKeys { path: origin.to_path_buf(), keys: unknown });
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` with overrides from the process environment. Relative
/// paths in the file are resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    load_config_with_env(path, std::env::vars())
}

pub fn load_config_with_env<I>(path: &Path, env: I) -> Result<PipelineConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut cfg = parse_config(&text, path, env)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
    cfg.check_paths()?;
    Ok(cfg)
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), msg: msg.into() }
}

/// Whether `path` could be created: its nearest existing ancestor must be a
/// directory.
fn creatable(path: &Path) -> bool {
    let mut cur = Some(path);
    while let Some(p) = cur {
        if p.as_os_str().is_empty() {
            return true;
        }
        if p.exists() {
            return p.is_dir() || p == path;
        }
        cur = p.parent();
    }
    true
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.limits.validate().map_err(|e| invalid("limits", e.to_string()))?;
        self.scheduler.budget.validate().map_err(|e| invalid("scheduler.budget", e.to_string()))?;
        if self.scheduler.workers == 0 {
            return Err(invalid("scheduler.workers", "must be positive"));
        }
        let costs = std::iter::once(("default".to_string(), &self.scheduler.costs.default))
            .chain(self.scheduler.costs.languages.iter().map(|(k, v)| (k.clone(), v)));
        for (lang, c) in costs {
            if !c.is_positive() {
                return Err(invalid(&format!("scheduler.costs.{lang}"), "costs must be positive"));
            }
        }
        if self.recipe.max_rounds == 0 {
            return Err(invalid("recipe.max_rounds", "must be positive"));
        }
        if self.clients.max_attempts == 0 {
            return Err(invalid("clients.max_attempts", "must be positive"));
        }
        if self.funnel.max_keywords == 0 {
            return Err(invalid("funnel.max_keywords", "must be positive"));
        }
        if self.funnel.fanout == 0 {
            return Err(invalid("funnel.fanout", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.registry.threshold) {
            return Err(invalid("registry.threshold", "must lie in [0, 1]"));
        }
        for (field, p) in self.output_paths() {
            if p.as_os_str().is_empty() {
                return Err(invalid(field, "must not be empty"));
            }
        }
        Ok(())
    }

    fn output_paths(&self) -> [(&'static str, &Path); 3] {
        [
            ("workspace", self.workspace.as_path()),
            ("registry.path", self.registry.path.as_path()),
            ("trace.path", self.trace.path.as_path()),
        ]
    }

    /// Fails when an output path sits below an existing regular file.
    pub fn check_paths(&self) -> Result<(), ConfigError> {
        for (field, p) in self.output_paths() {
            if !creatable(p) {
                return Err(invalid(field, format!("{} cannot be created", p.display())));
            }
        }
        if self.workspace.is_file() {
            return Err(invalid("workspace", "is a regular file"));
        }
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.workspace);
        fix(&mut self.clients.fixtures);
        fix(&mut self.registry.path);
        fix(&mut self.registry.taxonomy);
        fix(&mut self.trace.path);
        if let Some(p) = self.backend.sim_script.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig, ConfigError> {
        parse_config(text, Path::new("test.toml"), Vec::new())
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(parse("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = parse("buidl = 1\n[trace]\npath = \"t.jsonl\"\n").unwrap_err();
        match err {
            ConfigError::UnknownKeys { keys, .. } => assert_eq!(keys, vec!["buidl"]),
            e => panic!("unexpected {e}"),
        }
        let err = parse("[scheduler.budget]\ncpu_slotz = 2\n").unwrap_err().to_string();
        assert!(err.contains("cpu_slotz"), "{err}");
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse("[limits]\nbuild_timeout_s = \"soon\"\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(parse("[scheduler]\nworkers = 0\n"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(parse("[registry]\nthreshold = 1.5\n"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(parse("[limits]\nmemory_bytes = 0\n"), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn env_overrides() {
        let env = vec![
            ("DEPLOYFORGE_SCHEDULER__BUDGET__CPU_SLOTS".to_string(), "3".to_string()),
            ("DEPLOYFORGE_TRACE__PATH".to_string(), "x/trace.jsonl".to_string()),
            ("DEPLOYFORGE_BACKEND__KIND".to_string(), "engine".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        let cfg = parse_config("[scheduler]\nworkers = 2\n", Path::new("c.toml"), env).unwrap();
        assert_eq!(cfg.scheduler.budget.cpu_slots, 3);
        assert_eq!(cfg.scheduler.workers, 2);
        assert_eq!(cfg.trace.path, PathBuf::from("x/trace.jsonl"));
        assert_eq!(cfg.backend.kind, BackendKind::Engine);
        let env = vec![("DEPLOYFORGE_NOPE".to_string(), "1".to_string())];
        assert!(matches!(parse_config("", Path::new("c.toml"), env), Err(ConfigError::UnknownKeys { .. })));
    }

    #[test]
    fn round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.backend.sim_script = Some("sim/script.json".into());
        cfg.recipe.reviewer = ReviewerKind::None;
        cfg.funnel.rules.allow_unknown_license = false;
        let text = cfg.to_toml();
        assert_eq!(parse(&text).unwrap(), cfg);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[trace]\npath = \"t/trace.jsonl\"\n").unwrap();
        let cfg = load_config_with_env(&p, Vec::new()).unwrap();
        assert_eq!(cfg.trace.path, dir.path().join("t/trace.jsonl"));
        std::fs::write(dir.path().join("blocker"), "").unwrap();
        std::fs::write(&p, "workspace = \"blocker/w\"\n").unwrap();
        assert!(matches!(load_config_with_env(&p, Vec::new()), Err(ConfigError::Invalid { .. })));
    }
}

//! Deterministic stand-in for a container engine.
//!
//! Outcomes come from a fixture script keyed by spec digest. Specs absent
//! from the script can fall through to [`world`], a small interpreter that
//! models base images, package managers and common build tools closely
//! enough to tell a working recipe from a broken one.
//!
//! Built images are recorded as `<hex>.json` files in a content-addressed
//! store so that validation can happen in a later process.

mod world;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Backend, ExecError, ExecutionLimits, ExitStatus, Outcome, RawBuild, RawRun};
use crate::digest::sha256_hex;
use crate::recipe::BuildSpec;

pub use world::{BaseProfile, WorldImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedValidation {
    #[serde(default)]
    pub exit: Option<ExitStatus>,
    /// Never finishes; reported as a timeout.
    #[serde(default)]
    pub hang: bool,
    #[serde(default = "default_validate_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub log: String,
}

fn default_validate_duration() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub outcome: Outcome,
    pub duration_s: f64,
    /// Log text file, relative to the script's directory.
    #[serde(default)]
    pub log_file: Option<String>,
    /// Inline log text, used when `log_file` is absent.
    #[serde(default)]
    pub log: Option<String>,
    /// Exit code of a failed build; defaults to 1.
    #[serde(default)]
    pub exit: Option<i32>,
    #[serde(default)]
    pub image_digest: Option<String>,
    /// Builds given less memory than this are OOM-killed.
    #[serde(default)]
    pub min_memory_bytes: Option<u64>,
    /// Builds given less disk than this run out of space.
    #[serde(default)]
    pub min_disk_bytes: Option<u64>,
    #[serde(default)]
    pub validate: Option<ScriptedValidation>,
    /// Simulates the engine itself being unavailable.
    #[serde(default)]
    pub infra_error: Option<String>,
}

/// Fixture script: spec digest to scripted outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimScript {
    pub entries: BTreeMap<String, ScriptEntry>,
    pub base_dir: PathBuf,
}

impl SimScript {
    pub fn load(path: &Path) -> Result<Self, ExecError> {
        let text = fs::read_to_string(path).map_err(|source| ExecError::Io { path: path.to_path_buf(), source })?;
        let entries: BTreeMap<String, ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| ExecError::Infrastructure(format!("simulation script {}: {e}", path.display())))?;
        Ok(Self {
            entries,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    fn log_text(&self, entry: &ScriptEntry) -> Result<String, ExecError> {
        match (&entry.log_file, &entry.log) {
            (Some(f), _) => {
                let p = self.base_dir.join(f);
                fs::read_to_string(&p).map_err(|source| ExecError::Io { path: p, source })
            }
            (None, Some(t)) => Ok(t.clone()),
            (None, None) => Ok(String::new()),
        }
    }
}

/// Stored image record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SimImage {
    image_digest: String,
    spec_digest: String,
    #[serde(default)]
    scripted_validate: Option<ScriptedValidation>,
    #[serde(default)]
    world: Option<WorldImage>,
}

#[derive(Debug, Clone)]
pub struct SimBackend {
    pub script: SimScript,
    /// Directory of the content-addressed image store.
    pub store: PathBuf,
    /// Interpret specs that are not in the script instead of failing.
    pub interpret: bool,
}

fn image_file(store: &Path, digest: &str) -> PathBuf {
    let hex = digest.strip_prefix("sha256:").unwrap_or(digest);
    store.join(format!("{hex}.json"))
}

fn scripted_image_digest(spec_digest: &str) -> String {
    format!("sha256:{}", sha256_hex(format!("sim-image\n{spec_digest}")))
}

impl SimBackend {
    pub fn new(script: SimScript, store: impl Into<PathBuf>) -> Self {
        Self {
            script,
            store: store.into(),
            interpret: true,
        }
    }

    fn save(&self, image: &SimImage) -> Result<(), ExecError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ExecError::Io { path, source }
        };
        fs::create_dir_all(&self.store).map_err(io(&self.store))?;
        let path = image_file(&self.store, &image.image_digest);
        let body = serde_json::to_string(image).expect("image record serializes");
        // Unique temp name so concurrent builds of the same spec never share one.
        let tmp = path.with_extension(format!("tmp.{}.{:?}", std::process::id(), std::thread::current().id()));
        fs::write(&tmp, body).map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))
    }

    fn load(&self, digest: &str) -> Result<SimImage, ExecError> {
        let path = image_file(&self.store, digest);
        let text = fs::read_to_string(&path).map_err(|_| ExecError::MissingImage(digest.to_string()))?;
        serde_json::from_str(&text).map_err(|e| ExecError::Infrastructure(format!("corrupt image record {}: {e}", path.display())))
    }

    fn scripted_build(&self, spec_digest: &str, entry: &ScriptEntry, limits: &ExecutionLimits) -> Result<RawBuild, ExecError> {
        if let Some(e) = &entry.infra_error {
            return Err(ExecError::Infrastructure(e.clone()));
        }
        let mut log = self.script.log_text(entry)?;
        if entry.duration_s > limits.build_timeout_s as f64 {
            return Ok(RawBuild {
                exit: ExitStatus::Timeout,
                log,
                duration_s: limits.build_timeout_s as f64,
                image_digest: None,
            });
        }
        if entry.min_memory_bytes.is_some_and(|m| limits.memory_bytes < m) {
            if !log.is_empty() && !log.ends_with('\n') {
                log.push('\n');
            }
            log.push_str(&format!(
                "Killed\nERROR: build container OOMKilled at memory limit {} bytes (exit code: 137)\n",
                limits.memory_bytes
            ));
            return Ok(RawBuild {
                exit: ExitStatus::Code(137),
                log,
                duration_s: (entry.duration_s * 0.5).max(1.0),
                image_digest: None,
            });
        }
        if entry.min_disk_bytes.is_some_and(|m| limits.disk_bytes < m) {
            if !log.is_empty() && !log.ends_with('\n') {
                log.push('\n');
            }
            log.push_str("ERROR: failed to write layer: no space left on device\n");
            return Ok(RawBuild {
                exit: ExitStatus::Code(1),
                log,
                duration_s: (entry.duration_s * 0.5).max(1.0),
                image_digest: None,
            });
        }
        match entry.outcome {
            Outcome::Success => {
                let digest = entry.image_digest.clone().unwrap_or_else(|| scripted_image_digest(spec_digest));
                self.save(&SimImage {
                    image_digest: digest.clone(),
                    spec_digest: spec_digest.to_string(),
                    scripted_validate: entry.validate.clone(),
                    world: None,
                })?;
                Ok(RawBuild {
                    exit: ExitStatus::Code(0),
                    log,
                    duration_s: entry.duration_s,
                    image_digest: Some(digest),
                })
            }
            Outcome::Failure => Ok(RawBuild {
                exit: ExitStatus::Code(entry.exit.filter(|c| *c != 0).unwrap_or(1)),
                log,
                duration_s: entry.duration_s,
                image_digest: None,
            }),
        }
    }
}

impl Backend for SimBackend {
    fn name(&self) -> &str {
        "sim"
    }

    fn build(&self, spec: &BuildSpec, context: &Path, limits: &ExecutionLimits) -> Result<RawBuild, ExecError> {
        let spec_digest = spec.digest();
        if let Some(entry) = self.script.entries.get(&spec_digest) {
            return self.scripted_build(&spec_digest, entry, limits);
        }
        if !self.interpret {
            return Err(ExecError::Infrastructure(format!(
                "spec {spec_digest} has no scripted outcome and interpretation is off"
            )));
        }
        let built = world::build(spec, context)?;
        if built.duration_s > limits.build_timeout_s as f64 {
            return Ok(RawBuild {
                exit: ExitStatus::Timeout,
                log: built.log,
                duration_s: limits.build_timeout_s as f64,
                image_digest: None,
            });
        }
        let image_digest = match built.image {
            Some(img) => {
                let digest = format!(
                    "sha256:{}",
                    sha256_hex(format!("sim-image\n{spec_digest}\n{}", built.context_fingerprint))
                );
                self.save(&SimImage {
                    image_digest: digest.clone(),
                    spec_digest,
                    scripted_validate: None,
                    world: Some(img),
                })?;
                Some(digest)
            }
            None => None,
        };
        Ok(RawBuild {
            exit: built.exit,
            log: built.log,
            duration_s: built.duration_s,
            image_digest,
        })
    }

    fn run(&self, image_digest: &str, cmd: &[String], limits: &ExecutionLimits) -> Result<RawRun, ExecError> {
        let image = self.load(image_digest)?;
        if let Some(v) = &image.scripted_validate {
            if v.hang || v.duration_s > limits.validate_timeout_s as f64 {
                return Ok(RawRun {
                    exit: ExitStatus::Timeout,
                    log: v.log.clone(),
                    duration_s: limits.validate_timeout_s as f64,
                });
            }
            return Ok(RawRun {
                exit: v.exit.unwrap_or(ExitStatus::Code(0)),
                log: v.log.clone(),
                duration_s: v.duration_s,
            });
        }
        match &image.world {
            Some(w) => {
                let r = world::run(w, cmd);
                Ok(RawRun {
                    exit: r.exit,
                    log: r.log,
                    duration_s: r.duration_s,
                })
            }
            None => Ok(RawRun {
                exit: ExitStatus::Code(0),
                log: format!("usage: {} [options]\n", cmd[0]),
                duration_s: 1.0,
            }),
        }
    }
}

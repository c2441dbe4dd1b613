//! The `run-all` driver: analyze, plan, build, validate and register every
//! candidate of a pool, streaming one trace record per candidate.
//!
//! Builds are dispatched by the [`Scheduler`](crate::scheduler::Scheduler)
//! on a virtual clock advanced by reported build durations. Items dispatched
//! at the same instant run as one parallel batch. With the simulated backend
//! the trace and registry are therefore byte-identical across runs and pool
//! orderings.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

use crate::analyzer::{self, AnalyzeError, EvidenceOptions, IngestOptions, SourceLocation};
use crate::clients::{ClientError, Clients, RepoMetadata, RetryPolicy};
use crate::config::{BackendKind, PipelineConfig, ProposerKind, ReviewerKind};
use crate::digest::sha256_hex;
use crate::executor::{
    build_image, classify_failure, validate_tool, Backend, EngineBackend, ExecError, ExitStatus, FailureCategory,
    Outcome, Phase, SimBackend,
};
use crate::executor::sim::SimScript;
use crate::funnel::PoolRecord;
use crate::par::Exec;
use crate::recipe::{
    refine_loop, BuildSpec, ModelProposer, ModelReviewer, NoReviewer, ProposalError, Proposer, Reviewer,
    RuleProposer, RuleReviewer,
};
use crate::registry::{Registration, Registry, RegistryError};
use crate::scheduler::{Completion, Cost, Dispatched, SchedError, Scheduler, WorkItem};
use crate::taxonomy::{DomainTaxonomy, TaxonomyError};
use crate::trace::{self, AttemptRecord, TraceError, TraceWriter, SCHEMA_VERSION};

/// Clock origin of simulated runs.
pub const SIM_EPOCH: &str = "2025-01-01T00:00:00Z";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("candidate pool is empty; pass a pool produced by `discover`")]
    EmptyPool,
    #[error("pool {path} line {line}: {msg}")]
    Pool { path: PathBuf, line: usize, msg: String },
    #[error("cannot read pool {path}: {source}")]
    PoolIo { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("client setup: {0}")]
    Client(#[from] ClientError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

impl PipelineError {
    /// 2 for usage and configuration problems, 1 for infrastructure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::EmptyPool
            | PipelineError::Pool { .. }
            | PipelineError::PoolIo { .. }
            | PipelineError::Taxonomy(_)
            | PipelineError::Setup(_) => 2,
            _ => 1,
        }
    }
}

/// Reads a pool file: one [`PoolRecord`] (or bare repo metadata) per line.
pub fn load_pool(path: &Path) -> Result<Vec<RepoMetadata>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::PoolIo { path: path.into(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoolRecord = serde_json::from_str(line).map_err(|e| PipelineError::Pool {
            path: path.into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec.repo);
    }
    Ok(out)
}

/// Sorted by repo id, first occurrence of each id kept.
pub fn normalize_pool(pool: &[RepoMetadata]) -> Vec<RepoMetadata> {
    let mut seen = BTreeMap::new();
    for r in pool {
        seen.entry(r.repo_id.clone()).or_insert_with(|| r.clone());
    }
    seen.into_values().collect()
}

pub fn clients_for(cfg: &PipelineConfig) -> Result<Clients, ClientError> {
    // Every configured provider is a fixture provider.
    Ok(Clients::mock(&cfg.clients.fixtures)?.with_retry(RetryPolicy::immediate(cfg.clients.max_attempts)))
}

pub fn backend_for(cfg: &PipelineConfig) -> Result<Box<dyn Backend>, ExecError> {
    match cfg.backend.kind {
        BackendKind::Sim => {
            let script = match &cfg.backend.sim_script {
                Some(p) => SimScript::load(p)?,
                None => SimScript::default(),
            };
            Ok(Box::new(SimBackend::new(script, cfg.workspace.join("images"))))
        }
        BackendKind::Engine => Ok(Box::new(EngineBackend { program: cfg.backend.engine_program.clone() })),
    }
}

pub fn proposer_for(cfg: &PipelineConfig, kind: ProposerKind, clients: &Clients) -> Box<dyn Proposer> {
    match kind {
        ProposerKind::Rule => Box::new(RuleProposer::new(cfg.recipe.images.clone())),
        ProposerKind::Model => Box::new(ModelProposer::new(clients.clone(), cfg.recipe.images.clone())),
    }
}

pub fn reviewer_for(kind: ReviewerKind, clients: &Clients) -> Box<dyn Reviewer> {
    match kind {
        ReviewerKind::Rule => Box::new(RuleReviewer),
        ReviewerKind::Model => Box::new(ModelReviewer { clients: clients.clone() }),
        ReviewerKind::None => Box::new(NoReviewer),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub candidates: usize,
    /// Already present in the trace.
    pub skipped: usize,
    pub successes: usize,
    pub failures: usize,
    pub registered: usize,
    pub retries: usize,
    pub long_tail: usize,
    pub infra_errors: Vec<String>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.infra_errors.is_empty() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
struct Ready {
    repo: RepoMetadata,
    tool_id: String,
    language: String,
    artifact_count: u32,
    rounds_used: u32,
    spec: BuildSpec,
    context: PathBuf,
}

#[derive(Debug, Clone)]
enum Prepared {
    Ready(Box<Ready>),
    Failed(AttemptRecord),
    Infra { repo_id: String, msg: String },
}

#[derive(Debug, Clone)]
struct Attempt {
    outcome: Outcome,
    category: Option<FailureCategory>,
    build_duration_s: f64,
    validation_exit: Option<ExitStatus>,
    image_digest: Option<String>,
    elapsed_s: f64,
}

#[derive(Debug)]
struct Event {
    at: f64,
    started: f64,
    id: String,
    long_tail: bool,
    attempt: Attempt,
}

fn file_safe(id: &str) -> String {
    let stem: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(60)
        .collect();
    format!("{stem}-{}", &sha256_hex(id)[..8])
}

fn at(epoch: DateTime<Utc>, secs: f64) -> DateTime<Utc> {
    epoch + Duration::milliseconds((secs * 1000.0).round() as i64)
}

pub struct Pipeline<'a> {
    pub cfg: &'a PipelineConfig,
    pub clients: Clients,
    pub backend: Box<dyn Backend>,
    pub taxonomy: DomainTaxonomy,
    pub exec: Exec,
    /// Time origin of trace timestamps.
    pub epoch: DateTime<Utc>,
}

impl<'a> Pipeline<'a> {
    /// Clients, backend and taxonomy as configured.
    pub fn from_config(cfg: &'a PipelineConfig, exec: Exec) -> Result<Self, PipelineError> {
        let clients = clients_for(cfg)?;
        let backend = backend_for(cfg).map_err(|e| PipelineError::Setup(e.to_string()))?;
        let taxonomy = DomainTaxonomy::load(&cfg.registry.taxonomy)?;
        let epoch = match cfg.backend.kind {
            BackendKind::Sim => SIM_EPOCH.parse().expect("valid epoch"),
            BackendKind::Engine => Utc::now(),
        };
        Ok(Pipeline { cfg, clients, backend, taxonomy, exec, epoch })
    }

    fn prepare(&self, repo: &RepoMetadata) -> Prepared {
        let span = tracing::info_span!("prepare", candidate = %repo.repo_id);
        let _g = span.enter();
        let failed = |tool_id: String, lang: &str, artifacts: u32, rounds: u32, cat: FailureCategory| {
            Prepared::Failed(AttemptRecord {
                schema_version: SCHEMA_VERSION,
                tool_id,
                repo_url: repo.url.clone(),
                primary_language: lang.to_string(),
                artifact_count: artifacts,
                outcome: Outcome::Failure,
                failure_category: Some(cat),
                build_duration_s: 0.0,
                validation_exit: None,
                rounds_used: rounds,
                started_at: self.epoch,
                ended_at: self.epoch,
            })
        };
        let source = match self.clients.host.local_checkout(&repo.repo_id) {
            Some(p) => SourceLocation::Local(p),
            None => SourceLocation::Remote(repo.url.clone()),
        };
        let opts = IngestOptions::new(self.cfg.workspace.join("snapshots"));
        let snapshot = match analyzer::ingest(repo, &source, Some(&self.clients), &opts) {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(stage = "analyze", error = %e, "ingest failed");
                let unknown = format!("{}@unknown", repo.repo_id);
                return match e {
                    AnalyzeError::TooLarge { .. } => {
                        failed(unknown, &repo.primary_language, 0, 0, FailureCategory::Resource)
                    }
                    AnalyzeError::Clone(_) | AnalyzeError::SourceMissing(_) => {
                        failed(unknown, &repo.primary_language, 0, 0, FailureCategory::Network)
                    }
                    AnalyzeError::Io { .. } => Prepared::Infra { repo_id: repo.repo_id.clone(), msg: e.to_string() },
                };
            }
        };
        let tool_id = format!("{}@{}", repo.repo_id, &snapshot.commit_id[..snapshot.commit_id.len().min(12)]);
        let doc = analyzer::analyze(&snapshot, Some(&self.clients), &EvidenceOptions::default());
        let lang = doc.evidence.primary_language.clone();
        let artifacts = doc.inventory.artifact_count;
        let proposer = proposer_for(self.cfg, self.cfg.recipe.proposer, &self.clients);
        let reviewer = reviewer_for(self.cfg.recipe.reviewer, &self.clients);
        match refine_loop(&doc.evidence, proposer.as_ref(), reviewer.as_ref(), self.cfg.recipe.max_rounds) {
            Ok(out) => {
                tracing::info!(stage = "plan", tool_id = %tool_id, rounds = out.transcript.rounds_used(), "spec ready");
                Prepared::Ready(Box::new(Ready {
                    repo: repo.clone(),
                    tool_id,
                    language: lang,
                    artifact_count: artifacts,
                    rounds_used: out.transcript.rounds_used(),
                    spec: out.spec,
                    context: snapshot.checkout_path,
                }))
            }
            Err(ProposalError::Client(e)) => Prepared::Infra { repo_id: repo.repo_id.clone(), msg: e.to_string() },
            Err(e) => {
                tracing::warn!(stage = "plan", tool_id = %tool_id, error = %e, "no build spec");
                failed(tool_id, &lang, artifacts, 0, FailureCategory::BuildProcess)
            }
        }
    }

    fn execute(&self, r: &Ready, d: &Dispatched) -> Result<Attempt, ExecError> {
        let span = tracing::info_span!("build", candidate = %r.tool_id, long_tail = d.long_tail);
        let _g = span.enter();
        let mut limits = self.cfg.limits.with_memory(d.item.cost.memory_bytes);
        limits.cpu_slots = d.item.cost.cpu_slots;
        let log = self.cfg.workspace.join("logs").join(format!("{}.log", file_safe(&r.tool_id)));
        let tool_failure = |e: ExecError| -> Result<Attempt, ExecError> {
            if e.is_infrastructure() {
                return Err(e);
            }
            tracing::warn!(stage = "build", error = %e, "spec rejected");
            Ok(Attempt {
                outcome: Outcome::Failure,
                category: Some(FailureCategory::BuildProcess),
                build_duration_s: 0.0,
                validation_exit: None,
                image_digest: None,
                elapsed_s: 0.0,
            })
        };
        let build = match build_image(&r.spec, &r.context, &limits, self.backend.as_ref(), &log) {
            Ok(b) => b,
            Err(e) => return tool_failure(e),
        };
        let Some(digest) = build.image_digest.clone() else {
            tracing::info!(stage = "build", category = ?build.failure_category, "build failed");
            return Ok(Attempt {
                outcome: Outcome::Failure,
                category: build.failure_category,
                build_duration_s: build.build_duration_s,
                validation_exit: None,
                image_digest: None,
                elapsed_s: build.build_duration_s,
            });
        };
        let v = match validate_tool(&digest, &r.spec.validate_cmd, &limits, self.backend.as_ref(), &log) {
            Ok(v) => v,
            Err(e) => return tool_failure(e),
        };
        let elapsed = build.build_duration_s + v.duration_s;
        if v.passed {
            tracing::info!(stage = "validate", "validated");
            return Ok(Attempt {
                outcome: Outcome::Success,
                category: None,
                build_duration_s: build.build_duration_s,
                validation_exit: Some(v.exit_status),
                image_digest: Some(digest),
                elapsed_s: elapsed,
            });
        }
        let text = std::fs::read_to_string(&log).unwrap_or_default();
        let category = classify_failure(&text, &v.exit_status, Phase::Validate).unwrap_or(FailureCategory::Unknown);
        tracing::info!(stage = "validate", category = %category, "validation failed");
        Ok(Attempt {
            outcome: Outcome::Failure,
            category: Some(category),
            build_duration_s: build.build_duration_s,
            validation_exit: Some(v.exit_status),
            image_digest: None,
            elapsed_s: elapsed,
        })
    }

    fn clamp(&self, mut cost: Cost) -> Cost {
        let b = &self.cfg.scheduler.budget;
        cost.cpu_slots = cost.cpu_slots.min(b.cpu_slots);
        cost.memory_bytes = cost.memory_bytes.min(b.memory_bytes);
        cost
    }

    /// Runs every candidate of `pool` not already in the trace.
    pub fn run_all(&self, pool: &[RepoMetadata]) -> Result<RunSummary, PipelineError> {
        let pool = normalize_pool(pool);
        if pool.is_empty() {
            return Err(PipelineError::EmptyPool);
        }
        let done: BTreeSet<String> = if self.cfg.trace.path.exists() {
            trace::ingest(&self.cfg.trace.path)?.records.into_iter().map(|r| r.tool_id).collect()
        } else {
            BTreeSet::new()
        };
        let mut registry = Registry::open(&self.cfg.registry.path)?;
        let mut writer = TraceWriter::append(&self.cfg.trace.path)?;
        let mut summary = RunSummary { candidates: pool.len(), ..Default::default() };

        let prepared = self.exec.map(&pool, |r| self.prepare(r));
        let mut ready: BTreeMap<String, Ready> = BTreeMap::new();
        for p in prepared {
            match p {
                Prepared::Ready(r) if done.contains(&r.tool_id) => summary.skipped += 1,
                Prepared::Failed(rec) if done.contains(&rec.tool_id) => summary.skipped += 1,
                Prepared::Ready(r) => {
                    ready.insert(r.tool_id.clone(), *r);
                }
                Prepared::Failed(rec) => {
                    writer.write(&rec)?;
                    summary.failures += 1;
                }
                Prepared::Infra { repo_id, msg } => {
                    tracing::error!(stage = "prepare", candidate = %repo_id, error = %msg, "infrastructure error");
                    summary.infra_errors.push(format!("{repo_id}: {msg}"));
                }
            }
        }
        if !summary.infra_errors.is_empty() {
            return Ok(summary);
        }

        let mut sched = Scheduler::new(self.cfg.scheduler.budget).map_err(|e| PipelineError::Setup(e.to_string()))?;
        let mut pending: VecDeque<WorkItem> = ready
            .values()
            .map(|r| WorkItem::new(r.tool_id.clone(), self.clamp(self.cfg.scheduler.costs.estimate(&r.language))))
            .collect();
        let mut events: Vec<Event> = Vec::new();
        let mut now = 0.0f64;
        let mut halted = false;
        loop {
            while let Some(item) = pending.pop_front() {
                match sched.submit(item.clone()) {
                    Ok(_) => {}
                    Err(SchedError::QueueFull { .. }) => {
                        pending.push_front(item);
                        break;
                    }
                    Err(e) => return Err(PipelineError::Setup(e.to_string())),
                }
            }
            let mut batch = Vec::new();
            while !halted && events.len() + batch.len() < self.cfg.scheduler.workers {
                match sched.next_dispatch() {
                    Some(d) => batch.push(d),
                    None => break,
                }
            }
            let results = self.exec.map(&batch, |d| self.execute(&ready[&d.item.id], d));
            for (d, res) in batch.into_iter().zip(results) {
                if d.long_tail {
                    summary.long_tail += 1;
                }
                match res {
                    Ok(attempt) => events.push(Event {
                        at: now + attempt.elapsed_s,
                        started: now,
                        id: d.item.id,
                        long_tail: d.long_tail,
                        attempt,
                    }),
                    Err(e) => {
                        tracing::error!(stage = "build", candidate = %d.item.id, error = %e, "infrastructure error");
                        summary.infra_errors.push(format!("{}: {e}", d.item.id));
                        halted = true;
                        sched
                            .complete(&d.item.id, Completion::failure(FailureCategory::Unknown, 0.0))
                            .map_err(|e| PipelineError::Setup(e.to_string()))?;
                    }
                }
            }
            let Some(i) = (0..events.len()).min_by(|&a, &b| {
                events[a].at.total_cmp(&events[b].at).then_with(|| events[a].id.cmp(&events[b].id))
            }) else {
                break;
            };
            let ev = events.swap_remove(i);
            now = ev.at;
            let done = match (ev.attempt.outcome, ev.attempt.category) {
                (Outcome::Failure, Some(c)) => Completion::failure(c, ev.attempt.elapsed_s),
                _ => Completion::success(ev.attempt.elapsed_s),
            };
            let out = sched.complete(&ev.id, done).map_err(|e| PipelineError::Setup(e.to_string()))?;
            if out.retry.is_some() {
                tracing::info!(stage = "schedule", candidate = %ev.id, "resource failure; retrying with more memory");
                summary.retries += 1;
                continue;
            }
            self.finish(&ready[&ev.id], &ev, &mut registry, &mut writer, &mut summary)?;
        }
        Ok(summary)
    }

    fn finish(
        &self,
        r: &Ready,
        ev: &Event,
        registry: &mut Registry,
        writer: &mut TraceWriter,
        summary: &mut RunSummary,
    ) -> Result<(), PipelineError> {
        let a = &ev.attempt;
        let rec = AttemptRecord {
            schema_version: SCHEMA_VERSION,
            tool_id: r.tool_id.clone(),
            repo_url: r.repo.url.clone(),
            primary_language: r.language.clone(),
            artifact_count: r.artifact_count,
            outcome: a.outcome,
            failure_category: a.category,
            build_duration_s: a.build_duration_s,
            validation_exit: a.validation_exit,
            rounds_used: r.rounds_used,
            started_at: at(self.epoch, ev.started),
            ended_at: at(self.epoch, ev.at),
        };
        if let (Outcome::Success, Some(digest)) = (a.outcome, &a.image_digest) {
            let reg = Registration {
                record: &rec,
                spec: &r.spec,
                image_digest: digest,
                name: r.repo.name(),
                description: &r.repo.description,
                tags: &r.repo.topics,
                registered_at: rec.ended_at,
            };
            match registry.register(&reg, &self.taxonomy, self.clients.embedder.as_ref(), self.cfg.registry.threshold) {
                Ok(_) => summary.registered += 1,
                Err(e @ (RegistryError::Io { .. } | RegistryError::Corrupt { .. })) => return Err(e.into()),
                Err(e) => {
                    tracing::error!(stage = "register", candidate = %r.tool_id, error = %e, "registration failed");
                    summary.infra_errors.push(format!("{}: {e}", r.tool_id));
                }
            }
            summary.successes += 1;
        } else {
            summary.failures += 1;
        }
        tracing::info!(
            stage = "trace",
            candidate = %r.tool_id,
            outcome = ?a.outcome,
            long_tail = ev.long_tail,
            "attempt recorded"
        );
        writer.write(&rec)?;
        Ok(())
    }
}

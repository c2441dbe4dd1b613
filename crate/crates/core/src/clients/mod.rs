//! Boundary to every external service: git host, supplemental web search,
//! text-generation models and embedding providers.
//!
//! Nothing else in the crate touches the network. Stages receive a [`Clients`]
//! facade, which wraps the raw trait objects with the shared [`RetryPolicy`].
//! The [`mock`] implementations resolve everything from committed fixture
//! files and are pure functions of their inputs.

pub mod git;
pub mod mock;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest::{canonical_json, sha256_hex};

pub use git::GitCli;
pub use mock::{MockEmbedder, MockGitHost, MockModel, MockSearch};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("rate limited, retry after {wait_hint:?}")]
    RateLimited { wait_hint: Duration },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("budget exceeded after {attempts} attempts: {last}")]
    BudgetExceeded { attempts: u32, last: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ClientError::RateLimited { .. } | ClientError::Network(_) | ClientError::Provider(_)
        )
    }
}

/// Bounded retry with exponential backoff. `max_attempts` counts the first
/// call, so the default of 3 means one call plus two retries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// No sleeping between attempts; used with mock clients.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
        let max = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retryable() => return Err(e),
                Err(e) if attempt >= max => {
                    return Err(match e {
                        ClientError::Provider(msg) => ClientError::BudgetExceeded {
                            attempts: attempt,
                            last: msg,
                        },
                        other => other,
                    })
                }
                Err(e) => {
                    let mut delay = self.delay_for(attempt);
                    if let ClientError::RateLimited { wait_hint } = e {
                        delay = delay.max(wait_hint);
                    }
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
            }
        }
    }
}

/// Metadata for one hosted repository.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepoMetadata {
    /// `host/owner/name`
    pub repo_id: String,
    pub url: String,
    #[serde(default = "unknown")]
    pub license_id: String,
    #[serde(default = "unknown")]
    pub primary_language: String,
    #[serde(default)]
    pub star_count: u64,
    #[serde(default)]
    pub is_archived: bool,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub topics: Vec<String>,
}

fn unknown() -> String {
    "unknown".to_string()
}

impl RepoMetadata {
    /// Last path component of the repo id.
    pub fn name(&self) -> &str {
        self.repo_id.rsplit('/').next().unwrap_or(&self.repo_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryFilters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_stars: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archived: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GitHostQuery {
    pub keywords: Vec<String>,
    #[serde(default)]
    pub filters: QueryFilters,
    #[serde(default)]
    pub page_cursor: Option<String>,
}

impl GitHostQuery {
    pub fn keywords(keywords: &[&str]) -> Self {
        Self {
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
            filters: QueryFilters::default(),
            page_cursor: None,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.keywords.is_empty() || self.keywords.iter().any(|k| k.trim().is_empty()) {
            return Err(ClientError::InvalidRequest("keywords must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoPage {
    pub repos: Vec<RepoMetadata>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Dependency,
    Reference,
    Contributor,
    Link,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Dependency => "dependency",
            EdgeKind::Reference => "reference",
            EdgeKind::Contributor => "contributor",
            EdgeKind::Link => "link",
        })
    }
}

/// A relationship from an anchor repository to another repository.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepoEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

/// Repository search and metadata. Implementations must be shareable across
/// worker threads.
pub trait GitHost: Send + Sync {
    fn search_repositories(&self, query: &GitHostQuery) -> Result<RepoPage, ClientError>;
    fn repo(&self, repo_id: &str) -> Result<Option<RepoMetadata>, ClientError>;
    /// Relative paths of every file in the default branch.
    fn list_files(&self, repo_id: &str) -> Result<Vec<String>, ClientError>;
    /// Outgoing anchor edges (dependencies, references, shared contributors, links).
    fn related(&self, repo_id: &str) -> Result<Vec<RepoEdge>, ClientError>;
    /// A local checkout, when the host can provide one without cloning.
    fn local_checkout(&self, _repo_id: &str) -> Option<PathBuf> {
        None
    }
}

/// Fetches a repository over the network into `dest`.
pub trait RepoCloner: Send + Sync {
    fn clone_repo(&self, url: &str, dest: &Path) -> Result<(), ClientError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub source_url: String,
    pub text: String,
}

pub trait SupplementalSearch: Send + Sync {
    fn fetch_supplemental(&self, query: &str) -> Result<Vec<Snippet>, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Proposer,
    Reviewer,
}

/// Structured evidence handed to a text model. `task` names the operation
/// (e.g. `expand_keywords`), `subject` the entity it concerns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub task: String,
    pub subject: String,
    #[serde(default)]
    pub payload: Value,
}

impl PromptContext {
    pub fn new(task: impl Into<String>, subject: impl Into<String>, payload: Value) -> Self {
        Self {
            task: task.into(),
            subject: subject.into(),
            payload,
        }
    }

    pub fn digest(&self) -> String {
        let v = serde_json::json!({
            "task": self.task,
            "subject": self.subject,
            "payload": self.payload,
        });
        sha256_hex(canonical_json(&v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextExchange {
    pub role: Role,
    pub prompt_context: PromptContext,
    pub response_text: String,
}

pub trait TextModel: Send + Sync {
    fn complete_text(&self, role: Role, context: &PromptContext) -> Result<TextExchange, ClientError>;
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, ClientError>;
}

/// Shared handle to every external client plus the retry policy applied to
/// each call.
#[derive(Clone)]
pub struct Clients {
    pub host: Arc<dyn GitHost>,
    pub search: Arc<dyn SupplementalSearch>,
    pub model: Arc<dyn TextModel>,
    pub embedder: Arc<dyn Embedder>,
    pub cloner: Arc<dyn RepoCloner>,
    pub retry: RetryPolicy,
}

impl fmt::Debug for Clients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Clients").field("retry", &self.retry).finish_non_exhaustive()
    }
}

impl Clients {
    /// Mock clients backed by a fixture directory laid out as
    /// `host/`, `search/`, `model/completions.json`, `embedding/vocab.txt`.
    /// Missing pieces fall back to empty fixtures.
    pub fn mock(fixtures: &Path) -> Result<Self, ClientError> {
        Ok(Self {
            host: Arc::new(MockGitHost::load(&fixtures.join("host"))?),
            search: Arc::new(MockSearch::load(&fixtures.join("search"))?),
            model: Arc::new(MockModel::load(&fixtures.join("model/completions.json"))?),
            embedder: Arc::new(MockEmbedder::load_or_default(&fixtures.join("embedding/vocab.txt"))?),
            cloner: Arc::new(GitCli::default()),
            retry: RetryPolicy::immediate(3),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn search_repositories(&self, query: &GitHostQuery) -> Result<RepoPage, ClientError> {
        query.validate()?;
        self.retry.run(|| self.host.search_repositories(query))
    }

    pub fn repo(&self, repo_id: &str) -> Result<Option<RepoMetadata>, ClientError> {
        self.retry.run(|| self.host.repo(repo_id))
    }

    pub fn list_files(&self, repo_id: &str) -> Result<Vec<String>, ClientError> {
        self.retry.run(|| self.host.list_files(repo_id))
    }

    pub fn related(&self, repo_id: &str) -> Result<Vec<RepoEdge>, ClientError> {
        self.retry.run(|| self.host.related(repo_id))
    }

    pub fn fetch_supplemental(&self, query: &str) -> Result<Vec<Snippet>, ClientError> {
        if query.trim().is_empty() {
            return Err(ClientError::InvalidRequest("empty supplemental query".into()));
        }
        self.retry.run(|| self.search.fetch_supplemental(query))
    }

    pub fn complete_text(&self, role: Role, context: &PromptContext) -> Result<TextExchange, ClientError> {
        self.retry.run(|| {
            let ex = self.model.complete_text(role, context)?;
            if ex.response_text.trim().is_empty() {
                return Err(ClientError::Provider("empty response".into()));
            }
            Ok(ex)
        })
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        if text.trim().is_empty() {
            return Err(ClientError::InvalidRequest("cannot embed empty text".into()));
        }
        self.retry.run(|| self.embedder.embed_text(text))
    }

    pub fn clone_repo(&self, url: &str, dest: &Path) -> Result<(), ClientError> {
        self.retry.run(|| self.cloner.clone_repo(url, dest))
    }
}

/// Cosine similarity; zero-norm vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Parses a JSON-lines body, reporting the 1-based line of the first error.
pub(crate) fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retry_stops_at_bound_and_reports_budget() {
        let calls = Cell::new(0);
        let policy = RetryPolicy::immediate(3);
        let res: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(ClientError::Provider("boom".into()))
        });
        assert_eq!(calls.get(), 3);
        assert_eq!(
            res,
            Err(ClientError::BudgetExceeded {
                attempts: 3,
                last: "boom".into()
            })
        );
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        let calls = Cell::new(0);
        let res: Result<(), _> = RetryPolicy::immediate(5).run(|| {
            calls.set(calls.get() + 1);
            Err(ClientError::Auth("bad token".into()))
        });
        assert_eq!(calls.get(), 1);
        assert!(matches!(res, Err(ClientError::Auth(_))));
    }

    #[test]
    fn transient_then_success() {
        let calls = Cell::new(0);
        let res = RetryPolicy::immediate(3).run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(ClientError::Network("reset".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(res, Ok(7));
    }

    #[test]
    fn network_exhaustion_keeps_category() {
        let res: Result<(), _> =
            RetryPolicy::immediate(2).run(|| Err(ClientError::Network("dns".into())));
        assert_eq!(res, Err(ClientError::Network("dns".into())));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(500),
        };
        assert_eq!(p.delay_for(1), Duration::from_millis(100));
        assert_eq!(p.delay_for(2), Duration::from_millis(200));
        assert_eq!(p.delay_for(3), Duration::from_millis(400));
        assert_eq!(p.delay_for(4), Duration::from_millis(500));
        assert_eq!(p.delay_for(40), Duration::from_millis(500));
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn prompt_digest_ignores_key_order() {
        let a = PromptContext::new("t", "s", serde_json::json!({"a": 1, "b": 2}));
        let b = PromptContext::new("t", "s", serde_json::from_str(r#"{"b":2,"a":1}"#).unwrap());
        assert_eq!(a.digest(), b.digest());
        let c = PromptContext::new("t", "s2", serde_json::json!({"a": 1, "b": 2}));
        assert_ne!(a.digest(), c.digest());
    }
}

//! Deterministic offline clients backed by fixture files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    parse_jsonl, ClientError, Embedder, GitHost, GitHostQuery, PromptContext, RepoEdge, RepoMetadata,
    RepoPage, Role, Snippet, SupplementalSearch, TextExchange, TextModel,
};
use crate::digest::sha256_hex;

/// Default page size of the mock host.
pub const MOCK_PAGE_SIZE: usize = 10;

/// Literal reply of the mock reviewer when it approves a proposal.
pub const NO_OBJECTIONS: &str = "no objections";

fn read_optional(path: &Path) -> Result<Option<String>, ClientError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ClientError::InvalidRequest(format!("{}: {e}", path.display()))),
    }
}

fn fixture_err(path: &Path, e: impl std::fmt::Display) -> ClientError {
    ClientError::InvalidRequest(format!("bad fixture {}: {e}", path.display()))
}

/// Case-insensitive keyword match: equal to a topic, or contained in the
/// repository name or description.
pub fn keyword_matches(repo: &RepoMetadata, keyword: &str) -> bool {
    let kw = keyword.trim().to_lowercase();
    if kw.is_empty() {
        return false;
    }
    repo.topics.iter().any(|t| t.to_lowercase() == kw)
        || repo.name().to_lowercase().contains(&kw)
        || repo.description.to_lowercase().contains(&kw)
}

/// Git host serving a fixture directory:
///
/// - `repos.jsonl`: one [`RepoMetadata`] per line
/// - `trees.json`: repo id to list of file paths
/// - `edges.jsonl`: one [`RepoEdge`] per line
/// - `checkouts.json`: repo id to a checkout directory relative to the fixture dir
#[derive(Debug, Default)]
pub struct MockGitHost {
    repos: BTreeMap<String, RepoMetadata>,
    trees: BTreeMap<String, Vec<String>>,
    edges: BTreeMap<String, Vec<RepoEdge>>,
    checkouts: BTreeMap<String, PathBuf>,
    page_size: usize,
}

impl MockGitHost {
    pub fn new(repos: Vec<RepoMetadata>) -> Self {
        Self {
            repos: repos.into_iter().map(|r| (r.repo_id.clone(), r)).collect(),
            page_size: MOCK_PAGE_SIZE,
            ..Default::default()
        }
    }

    pub fn load(dir: &Path) -> Result<Self, ClientError> {
        let mut host = Self::new(Vec::new());
        let repos_path = dir.join("repos.jsonl");
        if let Some(text) = read_optional(&repos_path)? {
            let repos: Vec<RepoMetadata> = parse_jsonl(&text).map_err(|e| fixture_err(&repos_path, e))?;
            for r in repos {
                if host.repos.insert(r.repo_id.clone(), r.clone()).is_some() {
                    return Err(fixture_err(&repos_path, format!("duplicate repo_id {}", r.repo_id)));
                }
            }
        }
        let trees_path = dir.join("trees.json");
        if let Some(text) = read_optional(&trees_path)? {
            host.trees = serde_json::from_str(&text).map_err(|e| fixture_err(&trees_path, e))?;
        }
        let edges_path = dir.join("edges.jsonl");
        if let Some(text) = read_optional(&edges_path)? {
            let edges: Vec<RepoEdge> = parse_jsonl(&text).map_err(|e| fixture_err(&edges_path, e))?;
            for e in edges {
                host.edges.entry(e.from.clone()).or_default().push(e);
            }
            for list in host.edges.values_mut() {
                list.sort();
                list.dedup();
            }
        }
        let co_path = dir.join("checkouts.json");
        if let Some(text) = read_optional(&co_path)? {
            let map: BTreeMap<String, String> =
                serde_json::from_str(&text).map_err(|e| fixture_err(&co_path, e))?;
            host.checkouts = map.into_iter().map(|(k, v)| (k, dir.join(v))).collect();
        }
        Ok(host)
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn with_tree(mut self, repo_id: &str, files: &[&str]) -> Self {
        self.trees
            .insert(repo_id.to_string(), files.iter().map(|f| f.to_string()).collect());
        self
    }

    pub fn with_edge(mut self, edge: RepoEdge) -> Self {
        let list = self.edges.entry(edge.from.clone()).or_default();
        list.push(edge);
        list.sort();
        list.dedup();
        self
    }

    pub fn repos(&self) -> impl Iterator<Item = &RepoMetadata> {
        self.repos.values()
    }

    fn query_key(query: &GitHostQuery) -> String {
        let mut q = query.clone();
        q.page_cursor = None;
        let text = serde_json::to_string(&q).unwrap_or_default();
        sha256_hex(text)[..16].to_string()
    }

    fn matches(repo: &RepoMetadata, query: &GitHostQuery) -> bool {
        let f = &query.filters;
        query.keywords.iter().all(|k| keyword_matches(repo, k))
            && f.min_stars.map_or(true, |s| repo.star_count >= s)
            && f.license.as_ref().map_or(true, |l| l.eq_ignore_ascii_case(&repo.license_id))
            && f.language
                .as_ref()
                .map_or(true, |l| l.eq_ignore_ascii_case(&repo.primary_language))
            && f.archived.map_or(true, |a| a == repo.is_archived)
    }
}

impl GitHost for MockGitHost {
    fn search_repositories(&self, query: &GitHostQuery) -> Result<RepoPage, ClientError> {
        query.validate()?;
        let key = Self::query_key(query);
        let offset = match &query.page_cursor {
            None => 0,
            Some(c) => {
                let (k, off) = c
                    .split_once(':')
                    .ok_or_else(|| ClientError::InvalidRequest(format!("malformed cursor {c}")))?;
                if k != key {
                    return Err(ClientError::InvalidRequest("cursor issued for another query".into()));
                }
                off.parse::<usize>()
                    .map_err(|_| ClientError::InvalidRequest(format!("malformed cursor {c}")))?
            }
        };
        let hits: Vec<&RepoMetadata> = self.repos.values().filter(|r| Self::matches(r, query)).collect();
        let page: Vec<RepoMetadata> = hits
            .iter()
            .skip(offset)
            .take(self.page_size)
            .map(|r| (*r).clone())
            .collect();
        let next = offset + page.len();
        let next_cursor = (next < hits.len()).then(|| format!("{key}:{next}"));
        Ok(RepoPage {
            repos: page,
            next_cursor,
        })
    }

    fn repo(&self, repo_id: &str) -> Result<Option<RepoMetadata>, ClientError> {
        Ok(self.repos.get(repo_id).cloned())
    }

    fn list_files(&self, repo_id: &str) -> Result<Vec<String>, ClientError> {
        if let Some(tree) = self.trees.get(repo_id) {
            let mut t = tree.clone();
            t.sort();
            return Ok(t);
        }
        if let Some(dir) = self.checkouts.get(repo_id) {
            let mut files = Vec::new();
            for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
                let entry = entry.map_err(|e| ClientError::Network(e.to_string()))?;
                if entry.file_type().is_file() {
                    if let Ok(rel) = entry.path().strip_prefix(dir) {
                        files.push(rel.to_string_lossy().replace('\\', "/"));
                    }
                }
            }
            return Ok(files);
        }
        Ok(Vec::new())
    }

    fn related(&self, repo_id: &str) -> Result<Vec<RepoEdge>, ClientError> {
        Ok(self.edges.get(repo_id).cloned().unwrap_or_default())
    }

    fn local_checkout(&self, repo_id: &str) -> Option<PathBuf> {
        self.checkouts.get(repo_id).cloned()
    }
}

#[derive(Debug, Deserialize)]
struct IndexEntry {
    file: String,
    url: String,
}

/// Supplemental search over `index.json` (normalized query to ranked list of
/// `{file, url}`) and the snippet files beside it.
#[derive(Debug, Default)]
pub struct MockSearch {
    index: BTreeMap<String, Vec<Snippet>>,
}

pub fn normalize_query(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl MockSearch {
    pub fn load(dir: &Path) -> Result<Self, ClientError> {
        let index_path = dir.join("index.json");
        let Some(text) = read_optional(&index_path)? else {
            return Ok(Self::default());
        };
        let raw: BTreeMap<String, Vec<IndexEntry>> =
            serde_json::from_str(&text).map_err(|e| fixture_err(&index_path, e))?;
        let mut index = BTreeMap::new();
        for (query, entries) in raw {
            let mut snippets = Vec::new();
            for e in entries {
                let p = dir.join(&e.file);
                let text = fs::read_to_string(&p).map_err(|err| fixture_err(&p, err))?;
                snippets.push(Snippet {
                    source_url: e.url,
                    text,
                });
            }
            index.insert(normalize_query(&query), snippets);
        }
        Ok(Self { index })
    }
}

impl SupplementalSearch for MockSearch {
    fn fetch_supplemental(&self, query: &str) -> Result<Vec<Snippet>, ClientError> {
        Ok(self.index.get(&normalize_query(query)).cloned().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompletionEntry {
    role: Role,
    #[serde(default)]
    context_digest: Option<String>,
    #[serde(default)]
    context: Option<PromptContext>,
    #[serde(default)]
    task: Option<String>,
    #[serde(default)]
    subject: Option<String>,
    #[serde(default)]
    response: Option<String>,
    /// When set, the entry always answers with a provider error.
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    #[allow(dead_code)]
    note: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CompletionTable {
    entries: Vec<CompletionEntry>,
}

#[derive(Debug, Clone)]
enum Canned {
    Text(String),
    Fail(String),
}

/// Text model answering from a committed completion table.
///
/// Lookup order: exact `(role, context digest)`, then `(role, task, subject)`.
/// Entries may give the digest directly or a full `context` from which it is
/// computed at load. A reviewer request with no entry whose payload carries a
/// `proposal_digest` equal to the digest of some canned proposer response is
/// answered with [`NO_OBJECTIONS`]. Anything else is a provider error.
#[derive(Debug, Default)]
pub struct MockModel {
    by_digest: BTreeMap<(Role, String), Canned>,
    by_subject: BTreeMap<(Role, String, String), Canned>,
    proposer_outputs: BTreeSet<String>,
}

impl MockModel {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let Some(text) = read_optional(path)? else {
            return Ok(Self::default());
        };
        let table: CompletionTable = serde_json::from_str(&text).map_err(|e| fixture_err(path, e))?;
        let mut m = Self::default();
        for e in table.entries {
            m.insert(e).map_err(|msg| fixture_err(path, msg))?;
        }
        Ok(m)
    }

    fn insert(&mut self, e: CompletionEntry) -> Result<(), String> {
        let canned = match (&e.response, &e.error) {
            (Some(r), None) => Canned::Text(r.clone()),
            (None, Some(err)) => Canned::Fail(err.clone()),
            _ => return Err("entry needs exactly one of response/error".into()),
        };
        if let (Role::Proposer, Canned::Text(t)) = (e.role, &canned) {
            self.proposer_outputs.insert(sha256_hex(t));
        }
        let digest = e
            .context_digest
            .clone()
            .or_else(|| e.context.as_ref().map(PromptContext::digest));
        match (digest, e.task, e.subject) {
            (Some(d), _, _) => {
                self.by_digest.insert((e.role, d), canned);
            }
            (None, Some(task), Some(subject)) => {
                self.by_subject.insert((e.role, task, subject), canned);
            }
            _ => return Err("entry needs context_digest, context, or task+subject".into()),
        }
        Ok(())
    }

    /// Adds a `(role, task, subject)` entry; used by tests.
    pub fn with_response(mut self, role: Role, task: &str, subject: &str, response: &str) -> Self {
        self.by_subject.insert(
            (role, task.to_string(), subject.to_string()),
            Canned::Text(response.to_string()),
        );
        if role == Role::Proposer {
            self.proposer_outputs.insert(sha256_hex(response));
        }
        self
    }

    pub fn with_failure(mut self, role: Role, task: &str, subject: &str) -> Self {
        self.by_subject.insert(
            (role, task.to_string(), subject.to_string()),
            Canned::Fail("scripted provider failure".into()),
        );
        self
    }
}

impl TextModel for MockModel {
    fn complete_text(&self, role: Role, context: &PromptContext) -> Result<TextExchange, ClientError> {
        let hit = self
            .by_digest
            .get(&(role, context.digest()))
            .or_else(|| {
                self.by_subject
                    .get(&(role, context.task.clone(), context.subject.clone()))
            })
            .cloned();
        let response = match hit {
            Some(Canned::Text(t)) => t,
            Some(Canned::Fail(msg)) => return Err(ClientError::Provider(msg)),
            None => {
                let approved = role == Role::Reviewer
                    && context
                        .payload
                        .get("proposal_digest")
                        .and_then(|v| v.as_str())
                        .is_some_and(|d| self.proposer_outputs.contains(d));
                if approved {
                    NO_OBJECTIONS.to_string()
                } else {
                    return Err(ClientError::Provider(format!(
                        "no canned response for {:?} {}/{}",
                        role, context.task, context.subject
                    )));
                }
            }
        };
        Ok(TextExchange {
            role,
            prompt_context: context.clone(),
            response_text: response,
        })
    }
}

const DEFAULT_VOCAB: &str = include_str!("../../data/vocab.txt");

/// Term-frequency embedder over a fixed vocabulary, L2-normalized.
///
/// Text is lower-cased and split on non-alphanumeric characters; tokens not
/// in the vocabulary are ignored. Text without any vocabulary term embeds to
/// the zero vector.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    vocab: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl MockEmbedder {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab: Vec<String> = Vec::new();
        let mut index = BTreeMap::new();
        for t in terms {
            let t = t.as_ref().trim().to_lowercase();
            if t.is_empty() || t.starts_with('#') || index.contains_key(&t) {
                continue;
            }
            index.insert(t.clone(), vocab.len());
            vocab.push(t);
        }
        Self { vocab, index }
    }

    pub fn default_vocabulary() -> Self {
        Self::from_terms(DEFAULT_VOCAB.lines())
    }

    pub fn load_or_default(path: &Path) -> Result<Self, ClientError> {
        Ok(match read_optional(path)? {
            Some(text) => Self::from_terms(text.lines()),
            None => Self::default_vocabulary(),
        })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
    }
}

impl Embedder for MockEmbedder {
    fn dimension(&self) -> usize {
        self.vocab.len()
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        if text.trim().is_empty() {
            return Err(ClientError::InvalidRequest("cannot embed empty text".into()));
        }
        let mut v = vec![0.0; self.vocab.len()];
        for tok in Self::tokenize(text) {
            if let Some(&i) = self.index.get(&tok) {
                v[i] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn repo(id: &str, desc: &str, topics: &[&str]) -> RepoMetadata {
        RepoMetadata {
            repo_id: id.into(),
            url: format!("https://{id}"),
            license_id: "MIT".into(),
            primary_language: "Python".into(),
            star_count: 1,
            is_archived: false,
            description: desc.into(),
            topics: topics.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn pagination_is_finite_and_repeatable() {
        let repos: Vec<_> = (0..25)
            .map(|i| repo(&format!("h/o/r{i:02}"), "a solver", &[]))
            .collect();
        let host = MockGitHost::new(repos).with_page_size(10);
        let mut q = GitHostQuery::keywords(&["solver"]);
        let mut seen = Vec::new();
        let mut pages = 0;
        loop {
            let page = host.search_repositories(&q).unwrap();
            assert_eq!(page, host.search_repositories(&q).unwrap());
            seen.extend(page.repos.into_iter().map(|r| r.repo_id));
            pages += 1;
            match page.next_cursor {
                Some(c) => q.page_cursor = Some(c),
                None => break,
            }
        }
        assert_eq!(pages, 3);
        assert_eq!(seen.len(), 25);
    }

    #[test]
    fn foreign_cursor_rejected() {
        let host = MockGitHost::new(vec![repo("h/o/a", "x", &[])]);
        let mut q = GitHostQuery::keywords(&["x"]);
        q.page_cursor = Some("deadbeefdeadbeef:0".into());
        assert!(matches!(host.search_repositories(&q), Err(ClientError::InvalidRequest(_))));
    }

    #[test]
    fn no_match_gives_empty_page() {
        let host = MockGitHost::new(vec![repo("h/o/a", "x", &[])]);
        let page = host
            .search_repositories(&GitHostQuery::keywords(&["zzz-no-match"]))
            .unwrap();
        assert!(page.repos.is_empty());
        assert!(page.next_cursor.is_none());
    }

    #[test]
    fn filters_apply() {
        let mut a = repo("h/o/a", "md engine", &[]);
        a.is_archived = true;
        let b = repo("h/o/b", "md engine", &[]);
        let host = MockGitHost::new(vec![a, b]);
        let mut q = GitHostQuery::keywords(&["md"]);
        q.filters.archived = Some(false);
        let page = host.search_repositories(&q).unwrap();
        assert_eq!(page.repos.len(), 1);
        assert_eq!(page.repos[0].repo_id, "h/o/b");
    }

    #[test]
    fn model_lookup_and_failure() {
        let m = MockModel::default()
            .with_response(Role::Proposer, "expand_keywords", "md", "md; lammps")
            .with_failure(Role::Reviewer, "classify_repo", "x");
        let ctx = PromptContext::new("expand_keywords", "md", json!({}));
        assert_eq!(m.complete_text(Role::Proposer, &ctx).unwrap().response_text, "md; lammps");
        let ctx = PromptContext::new("classify_repo", "x", json!({}));
        assert!(m.complete_text(Role::Reviewer, &ctx).is_err());
    }

    #[test]
    fn reviewer_fixed_point_approves_canned_proposal() {
        let recipe = "FROM python:3.11-slim\n";
        let m = MockModel::default().with_response(Role::Proposer, "propose_spec", "r", recipe);
        let ok = PromptContext::new("review_spec", "r", json!({"proposal_digest": sha256_hex(recipe)}));
        assert_eq!(m.complete_text(Role::Reviewer, &ok).unwrap().response_text, NO_OBJECTIONS);
        let other = PromptContext::new("review_spec", "r", json!({"proposal_digest": sha256_hex("x")}));
        assert!(m.complete_text(Role::Reviewer, &other).is_err());
    }

    #[test]
    fn embedder_tf_normalized() {
        let e = MockEmbedder::from_terms(["protein", "folding", "dynamics"]);
        let v = e.embed_text("Protein folding, protein!").unwrap();
        let n = 5f64.sqrt();
        assert_eq!(v, vec![2.0 / n, 1.0 / n, 0.0]);
        assert_eq!(e.embed_text("nothing here").unwrap(), vec![0.0; 3]);
        assert!(e.embed_text("  ").is_err());
    }
}

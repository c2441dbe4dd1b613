//! Discovery funnel: keyword expansion, raw retrieval, anchor expansion,
//! heuristic filtering and semantic filtering.

mod rules;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::clients::{ClientError, Clients, EdgeKind, GitHostQuery, PromptContext, RepoMetadata, Role};
use crate::par::Exec;
use crate::taxonomy::DomainTaxonomy;

pub use rules::{apply_rules, FunnelRules, RuleId};

pub const DEFAULT_MAX_KEYWORDS: usize = 8;
pub const DEFAULT_ANCHOR_DEPTH: u32 = 1;
pub const DEFAULT_FANOUT: usize = 25;
/// Classifier label that keeps a repository.
pub const TOOL_LABEL: &str = "executable scientific tool";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Expanded,
    ToolLike,
    ExecutableCandidate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Expanded => "expanded",
            Stage::ToolLike => "tool_like",
            Stage::ExecutableCandidate => "executable_candidate",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Stage::Raw, Stage::Expanded, Stage::ToolLike, Stage::ExecutableCandidate]
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub stage: Stage,
    pub members: BTreeMap<String, RepoMetadata>,
    pub provenance: BTreeMap<String, Vec<Provenance>>,
    /// Members kept because the classifier could not label them.
    #[serde(default)]
    pub unclassified: BTreeSet<String>,
}

/// One line of a pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    #[serde(flatten)]
    pub repo: RepoMetadata,
    #[serde(default = "default_stage")]
    pub stage: Stage,
    #[serde(default)]
    pub provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unclassified: bool,
}

fn default_stage() -> Stage {
    Stage::ExecutableCandidate
}

impl CandidatePool {
    pub fn new(stage: Stage) -> Self {
        CandidatePool { stage, members: BTreeMap::new(), provenance: BTreeMap::new(), unclassified: BTreeSet::new() }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn add(&mut self, repo: RepoMetadata, stage: Stage, reason: String) {
        let id = repo.repo_id.clone();
        self.members.entry(id.clone()).or_insert(repo);
        let p = self.provenance.entry(id).or_default();
        let entry = Provenance { stage, reason };
        if !p.contains(&entry) {
            p.push(entry);
            p.sort();
        }
    }

    fn retain(&mut self, keep: &BTreeSet<String>) {
        self.members.retain(|k, _| keep.contains(k));
        self.provenance.retain(|k, _| keep.contains(k));
        self.unclassified.retain(|k| keep.contains(k));
    }

    /// JSON lines sorted by repo id.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, repo) in &self.members {
            let rec = PoolRecord {
                repo: repo.clone(),
                stage: self.stage,
                provenance: self.provenance.get(id).cloned().unwrap_or_default(),
                unclassified: self.unclassified.contains(id),
            };
            out.push_str(&serde_json::to_string(&rec).expect("pool record serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: Stage,
    pub count: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub stages: Vec<StageCount>,
    /// Heuristic rule id (or `semantic`) to rejected count.
    pub rejections: BTreeMap<String, usize>,
    /// Rejected repo ids per bucket.
    pub rejected: BTreeMap<String, Vec<String>>,
    pub unclassified: usize,
    /// Domains whose keywords fell back to the domain name.
    pub keyword_fallbacks: Vec<String>,
    pub warnings: Vec<String>,
}

impl FunnelReport {
    pub fn counts(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.count).collect()
    }

    /// The report with wall-clock fields zeroed, for comparisons.
    pub fn without_timing(&self) -> FunnelReport {
        let mut r = self.clone();
        for s in &mut r.stages {
            s.wall_ms = 0;
        }
        r
    }

    fn tidy(mut self) -> Self {
        self.keyword_fallbacks.sort();
        self.warnings.sort();
        self.warnings.dedup();
        self
    }

    fn stage(&mut self, stage: Stage, count: usize, started: Instant) {
        self.stages.push(StageCount { stage, count, wall_ms: started.elapsed().as_millis() as u64 });
    }
}

#[derive(Debug, Error)]
pub enum FunnelError {
    #[error("{stage} stage expects a {expected} pool, got {got}")]
    WrongStage { stage: &'static str, expected: &'static str, got: &'static str },
    #[error("host error: {0}")]
    Host(ClientError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunnelConfig {
    pub max_keywords: usize,
    pub anchor_depth: u32,
    pub fanout: usize,
    pub skip_expansion: bool,
    pub rules: FunnelRules,
}

impl Default for FunnelConfig {
    fn default() -> Self {
        FunnelConfig {
            max_keywords: DEFAULT_MAX_KEYWORDS,
            anchor_depth: DEFAULT_ANCHOR_DEPTH,
            fanout: DEFAULT_FANOUT,
            skip_expansion: false,
            rules: FunnelRules::default(),
        }
    }
}

fn push_keyword(out: &mut Vec<String>, k: &str, max: usize) {
    let k = k.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '-' || c == '*').trim().to_lowercase();
    if !k.is_empty() && out.len() < max && !out.contains(&k) {
        out.push(k);
    }
}

/// Fills every domain's keyword list (1 to `max` entries) from the text
/// model. Keywords already in the taxonomy come first. A failed expansion
/// falls back to the existing keywords or the domain name.
pub fn expand_keywords(taxonomy: &DomainTaxonomy, clients: &Clients, max: usize) -> (DomainTaxonomy, Vec<String>) {
    let max = max.max(1);
    let mut out = taxonomy.clone();
    let mut fallbacks = Vec::new();
    for d in &mut out.domains {
        let mut kws = Vec::new();
        for k in &d.keywords {
            push_keyword(&mut kws, k, max);
        }
        let ctx = PromptContext::new(
            "expand_keywords",
            d.id.clone(),
            json!({"name": d.name, "definition": d.definition, "max_keywords": max}),
        );
        match clients.complete_text(Role::Proposer, &ctx) {
            Ok(ex) => {
                for k in ex.response_text.split([';', ',', '\n']) {
                    push_keyword(&mut kws, k, max);
                }
            }
            Err(e) => {
                tracing::warn!(domain = %d.id, error = %e, "keyword expansion failed; using fallback");
                fallbacks.push(d.id.clone());
            }
        }
        if kws.is_empty() {
            push_keyword(&mut kws, &d.name, max);
            if !fallbacks.contains(&d.id) {
                fallbacks.push(d.id.clone());
            }
        }
        d.keywords = kws;
    }
    (out, fallbacks)
}

/// Union of single-keyword searches over every domain keyword.
pub fn retrieve_pool(taxonomy: &DomainTaxonomy, clients: &Clients, warnings: &mut Vec<String>) -> CandidatePool {
    let mut pool = CandidatePool::new(Stage::Raw);
    for d in &taxonomy.domains {
        for kw in &d.keywords {
            let mut query = GitHostQuery::keywords(&[kw.as_str()]);
            loop {
                match clients.search_repositories(&query) {
                    Ok(page) => {
                        for r in page.repos {
                            pool.add(r, Stage::Raw, format!("keyword {kw:?} (domain {})", d.id));
                        }
                        match page.next_cursor {
                            Some(c) => query.page_cursor = Some(c),
                            None => break,
                        }
                    }
                    Err(e) => {
                        warnings.push(format!("search for {kw:?} failed: {e}"));
                        break;
                    }
                }
            }
        }
    }
    pool
}

/// Breadth-first growth from every member along host edges, at most `depth`
/// hops and `fanout` edges per anchor.
pub fn expand_anchors(
    pool: &CandidatePool,
    clients: &Clients,
    depth: u32,
    fanout: usize,
    warnings: &mut Vec<String>,
) -> Result<CandidatePool, FunnelError> {
    if pool.stage != Stage::Raw {
        return Err(FunnelError::WrongStage { stage: "expansion", expected: "raw", got: pool.stage.as_str() });
    }
    let mut out = pool.clone();
    out.stage = Stage::Expanded;
    let mut visited: BTreeSet<String> = pool.members.keys().cloned().collect();
    let mut frontier: VecDeque<(String, u32)> = pool.members.keys().map(|k| (k.clone(), 0)).collect();
    while let Some((anchor, d)) = frontier.pop_front() {
        if d >= depth {
            continue;
        }
        let edges = match clients.related(&anchor) {
            Ok(e) => e,
            Err(e) => {
                warnings.push(format!("edges of {anchor} unavailable: {e}"));
                continue;
            }
        };
        for edge in edges.into_iter().take(fanout) {
            if visited.contains(&edge.to) {
                continue;
            }
            match clients.repo(&edge.to) {
                Ok(Some(repo)) => {
                    visited.insert(edge.to.clone());
                    out.add(repo, Stage::Expanded, format!("anchor {} via {}", anchor, edge_label(edge.kind)));
                    frontier.push_back((edge.to.clone(), d + 1));
                }
                Ok(None) => warnings.push(format!("{} (linked from {anchor}) not found on host", edge.to)),
                Err(e) => warnings.push(format!("lookup of {} failed: {e}", edge.to)),
            }
        }
    }
    Ok(out)
}

fn edge_label(k: EdgeKind) -> String {
    k.to_string()
}

/// Drops repositories matching any heuristic rule; returns the rejection
/// bucket of each dropped repo.
pub fn heuristic_filter(
    pool: &CandidatePool,
    rules: &FunnelRules,
    clients: &Clients,
    exec: Exec,
    warnings: &mut Vec<String>,
) -> Result<(CandidatePool, BTreeMap<String, RuleId>), FunnelError> {
    if !matches!(pool.stage, Stage::Raw | Stage::Expanded) {
        return Err(FunnelError::WrongStage { stage: "heuristic", expected: "raw or expanded", got: pool.stage.as_str() });
    }
    let repos: Vec<&RepoMetadata> = pool.members.values().collect();
    let verdicts = exec.map(&repos, |r| {
        let files = clients.list_files(&r.repo_id);
        (r.repo_id.clone(), files.map(|f| apply_rules(r, &f, rules)))
    });
    let mut out = pool.clone();
    out.stage = Stage::ToolLike;
    let mut rejected = BTreeMap::new();
    let mut keep = BTreeSet::new();
    for (id, v) in verdicts {
        match v {
            Ok(Some(rule)) => {
                rejected.insert(id, rule);
            }
            Ok(None) => {
                keep.insert(id);
            }
            Err(e) => {
                // Without a file listing the repo cannot be judged; keep it.
                warnings.push(format!("file listing of {id} failed: {e}"));
                keep.insert(id);
            }
        }
    }
    out.retain(&keep);
    for id in &keep {
        out.provenance.entry(id.clone()).or_default().push(Provenance {
            stage: Stage::ToolLike,
            reason: "passed heuristic rules".into(),
        });
    }
    Ok((out, rejected))
}

/// Keeps repositories the classifier labels as executable tools; a failed
/// classification keeps the repo and flags it.
pub fn semantic_filter(
    pool: &CandidatePool,
    clients: &Clients,
    exec: Exec,
) -> Result<(CandidatePool, BTreeSet<String>), FunnelError> {
    if pool.stage != Stage::ToolLike {
        return Err(FunnelError::WrongStage { stage: "semantic", expected: "tool_like", got: pool.stage.as_str() });
    }
    let repos: Vec<&RepoMetadata> = pool.members.values().collect();
    let labels = exec.map(&repos, |r| {
        let files = clients.list_files(&r.repo_id).unwrap_or_default();
        let summary = rules::inventory_summary(&files);
        let ctx = PromptContext::new(
            "classify_tool",
            r.repo_id.clone(),
            json!({"description": r.description, "topics": r.topics, "files": summary}),
        );
        (r.repo_id.clone(), clients.complete_text(Role::Proposer, &ctx))
    });
    let mut out = pool.clone();
    out.stage = Stage::ExecutableCandidate;
    let mut keep = BTreeSet::new();
    let mut rejected = BTreeSet::new();
    let mut unclassified = BTreeSet::new();
    for (id, label) in labels {
        match label {
            Ok(ex) if ex.response_text.trim().eq_ignore_ascii_case(TOOL_LABEL) => {
                keep.insert(id);
            }
            Ok(_) => {
                rejected.insert(id);
            }
            Err(e) => {
                tracing::warn!(repo = %id, error = %e, "classifier failed; keeping repo as unclassified");
                unclassified.insert(id.clone());
                keep.insert(id);
            }
        }
    }
    out.retain(&keep);
    for id in &keep {
        let reason = if unclassified.contains(id) { "classifier unavailable; kept" } else { "classified as tool" };
        out.provenance
            .entry(id.clone())
            .or_default()
            .push(Provenance { stage: Stage::ExecutableCandidate, reason: reason.into() });
    }
    out.unclassified = unclassified;
    Ok((out, rejected))
}

/// All four stages in order. `stop_after` ends the run early.
pub fn run_funnel(
    taxonomy: &DomainTaxonomy,
    clients: &Clients,
    cfg: &FunnelConfig,
    exec: Exec,
    stop_after: Option<Stage>,
) -> Result<(CandidatePool, FunnelReport), FunnelError> {
    let mut report = FunnelReport::default();
    let t = Instant::now();
    let (tax, fallbacks) = expand_keywords(taxonomy, clients, cfg.max_keywords);
    report.keyword_fallbacks = fallbacks;
    let raw = retrieve_pool(&tax, clients, &mut report.warnings);
    report.stage(Stage::Raw, raw.len(), t);
    if stop_after == Some(Stage::Raw) {
        return Ok((raw, report.tidy()));
    }

    let t = Instant::now();
    let expanded = if cfg.skip_expansion {
        raw
    } else {
        let e = expand_anchors(&raw, clients, cfg.anchor_depth, cfg.fanout, &mut report.warnings)?;
        report.stage(Stage::Expanded, e.len(), t);
        e
    };
    if stop_after == Some(Stage::Expanded) {
        return Ok((expanded, report.tidy()));
    }

    let t = Instant::now();
    let (tool_like, rejected) = heuristic_filter(&expanded, &cfg.rules, clients, exec, &mut report.warnings)?;
    report.stage(Stage::ToolLike, tool_like.len(), t);
    for r in RuleId::ALL {
        let ids: Vec<String> = rejected.iter().filter(|(_, v)| **v == r).map(|(k, _)| k.clone()).collect();
        report.rejections.insert(r.bucket().to_string(), ids.len());
        report.rejected.insert(r.bucket().to_string(), ids);
    }
    if stop_after == Some(Stage::ToolLike) {
        return Ok((tool_like, report.tidy()));
    }

    let t = Instant::now();
    let (final_pool, sem_rejected) = semantic_filter(&tool_like, clients, exec)?;
    report.stage(Stage::ExecutableCandidate, final_pool.len(), t);
    report.rejections.insert("semantic".into(), sem_rejected.len());
    report.rejected.insert("semantic".into(), sem_rejected.into_iter().collect());
    report.unclassified = final_pool.unclassified.len();
    Ok((final_pool, report.tidy()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{MockEmbedder, MockGitHost, MockModel, MockSearch, RepoEdge, RetryPolicy};
    use crate::taxonomy::Domain;
    use std::sync::Arc;

    fn repo(id: &str, desc: &str) -> RepoMetadata {
        RepoMetadata {
            repo_id: format!("github.com/{id}"),
            url: format!("https://github.com/{id}"),
            license_id: "mit".into(),
            primary_language: "python".into(),
            star_count: 10,
            is_archived: false,
            description: desc.into(),
            topics: vec![],
        }
    }

    fn clients(host: MockGitHost, model: MockModel) -> Clients {
        Clients {
            host: Arc::new(host),
            search: Arc::new(MockSearch::default()),
            model: Arc::new(model),
            embedder: Arc::new(MockEmbedder::from_terms(["x"])),
            cloner: Arc::new(crate::clients::GitCli::default()),
            retry: RetryPolicy::immediate(1),
        }
    }

    fn tax() -> DomainTaxonomy {
        DomainTaxonomy {
            domains: vec![Domain {
                id: "md".into(),
                name: "Molecular Dynamics".into(),
                definition: "simulation of atoms".into(),
                keywords: vec![],
            }],
        }
    }

    #[test]
    fn keyword_expansion_and_fallback() {
        let c = clients(
            MockGitHost::new(vec![]),
            MockModel::default().with_response(Role::Proposer, "expand_keywords", "md", "md; LAMMPS; gromacs; md"),
        );
        let (t, fb) = expand_keywords(&tax(), &c, 8);
        assert_eq!(t.domains[0].keywords, vec!["md", "lammps", "gromacs"]);
        assert!(fb.is_empty());
        let c = clients(MockGitHost::new(vec![]), MockModel::default());
        let (t, fb) = expand_keywords(&tax(), &c, 8);
        assert_eq!(t.domains[0].keywords, vec!["molecular dynamics"]);
        assert_eq!(fb, vec!["md"]);
    }

    #[test]
    fn anchors_bfs() {
        let a = repo("o/a", "lammps wrapper");
        let b = repo("o/b", "force fields");
        let host = MockGitHost::new(vec![a.clone(), b.clone()])
            .with_edge(RepoEdge { from: a.repo_id.clone(), to: b.repo_id.clone(), kind: EdgeKind::Dependency })
            .with_edge(RepoEdge { from: b.repo_id.clone(), to: a.repo_id.clone(), kind: EdgeKind::Reference });
        let c = clients(host, MockModel::default());
        let mut raw = CandidatePool::new(Stage::Raw);
        raw.add(a.clone(), Stage::Raw, "kw".into());
        let mut w = Vec::new();
        let e0 = expand_anchors(&raw, &c, 0, 25, &mut w).unwrap();
        assert_eq!(e0.members, raw.members);
        let e1 = expand_anchors(&raw, &c, 1, 25, &mut w).unwrap();
        assert_eq!(e1.len(), 2);
        assert!(e1.provenance[&b.repo_id][0].reason.contains("dependency"));
        let e5 = expand_anchors(&raw, &c, 5, 25, &mut w).unwrap();
        assert_eq!(e5.len(), 2);
    }

    #[test]
    fn empty_taxonomy_all_zero() {
        let c = clients(MockGitHost::new(vec![repo("o/a", "x")]), MockModel::default());
        let (pool, rep) =
            run_funnel(&DomainTaxonomy::default(), &c, &FunnelConfig::default(), Exec::Sequential, None).unwrap();
        assert!(pool.is_empty());
        assert_eq!(rep.counts(), vec![0, 0, 0, 0]);
    }

    #[test]
    fn classifier_failure_keeps_repo() {
        let a = repo("o/lammps-run", "lammps driver");
        let host = MockGitHost::new(vec![a.clone()]).with_tree(&a.repo_id, &["main.py", "setup.py"]);
        let model = MockModel::default().with_response(Role::Proposer, "expand_keywords", "md", "lammps");
        let c = clients(host, model);
        let (pool, rep) = run_funnel(&tax(), &c, &FunnelConfig::default(), Exec::Sequential, None).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(rep.unclassified, 1);
        assert!(pool.unclassified.contains(&a.repo_id));
    }
}

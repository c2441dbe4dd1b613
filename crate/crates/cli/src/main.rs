use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use deployforge_core::analyzer::{self, EvidenceOptions, IngestOptions, SourceLocation};
use deployforge_core::clients::{Clients, RepoMetadata};
use deployforge_core::config::{self, BackendKind, ProposerKind, ReviewerKind};
use deployforge_core::executor::{build_image, validate_tool, ExecutionLimits};
use deployforge_core::funnel::{run_funnel, Stage};
use deployforge_core::par::Exec;
use deployforge_core::pipeline::{self, Pipeline};
use deployforge_core::recipe::{refine_loop, BuildSpec};
use deployforge_core::registry::{Registry, SearchFilter};
use deployforge_core::scheduler::Budget;
use deployforge_core::taxonomy::DomainTaxonomy;
use deployforge_core::trace::{self, ReportFormat, DEFAULT_MIN_COUNT};
use deployforge_core::PipelineConfig;
use tracing_subscriber::EnvFilter;

/// Discover, containerize, validate and catalog research software.
#[derive(Parser)]
#[command(name = "deployforge", version)]
struct Cli {
    /// Pipeline config (TOML). Without it, defaults plus DEPLOYFORGE_* overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run data-parallel stages on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the discovery funnel and write the candidate pool.
    Discover(DiscoverArgs),
    /// Snapshot a repository and write its evidence bundle.
    Analyze(AnalyzeArgs),
    /// Propose and review a build recipe from an evidence bundle.
    Plan(PlanArgs),
    /// Build a recipe into an image.
    Build(BuildArgs),
    /// Run a command inside a built image.
    Validate(ValidateArgs),
    /// Analyze, plan, build, validate and register a whole pool.
    RunAll(RunAllArgs),
    /// Aggregate a trace into reports.
    Report(ReportArgs),
    /// Search the tool registry.
    Search(SearchArgs),
    /// Print the manifest of a registered tool.
    Export(ExportArgs),
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long, default_value = "pool.jsonl")]
    out: PathBuf,
    #[arg(long, default_value = "funnel.json")]
    report: PathBuf,
    #[arg(long)]
    skip_expansion: bool,
    /// Stop after this stage (raw, expanded, tool_like, executable_candidate).
    #[arg(long)]
    stage: Option<Stage>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Local directory, repo id or clone URL.
    source: String,
    #[arg(long, default_value = "evidence.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    evidence: PathBuf,
    #[arg(long, default_value = "spec.recipe")]
    out: PathBuf,
    #[arg(long, default_value = "transcript.json")]
    transcript: PathBuf,
    #[arg(long)]
    max_rounds: Option<u32>,
    #[arg(long)]
    proposer: Option<ProposerKind>,
    #[arg(long)]
    reviewer: Option<ReviewerKind>,
}

#[derive(Args)]
struct BuildArgs {
    spec: PathBuf,
    #[arg(long, default_value = ".")]
    context: PathBuf,
    #[arg(long)]
    backend: Option<BackendKind>,
    /// JSON or TOML file with execution limits.
    #[arg(long)]
    limits: Option<PathBuf>,
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
    /// Build log; defaults to the result path with a .log extension.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    digest: String,
    #[arg(long, required = true, num_args = 1.., allow_hyphen_values = true)]
    cmd: Vec<String>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    limits: Option<PathBuf>,
    #[arg(long, default_value = "validate.log")]
    log: PathBuf,
}

#[derive(Args)]
struct RunAllArgs {
    #[arg(long)]
    pool: PathBuf,
    /// JSON file with the scheduler budget.
    #[arg(long)]
    budget: Option<PathBuf>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Languages with fewer attempts are folded into `other`.
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: u64,
}

#[derive(Args)]
struct SearchArgs {
    query: String,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long, default_value_t = 10)]
    limit: usize,
}

#[derive(Args)]
struct ExportArgs {
    tool_id: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn usage(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, err: err.into() }
}

fn infra(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, err: err.into() }
}

type Res<T> = Result<T, Failure>;

fn load_config(path: Option<&Path>) -> Res<PipelineConfig> {
    let cfg = match path {
        Some(p) => config::load_config(p),
        None => config::parse_config("", Path::new("<defaults>"), std::env::vars())
            .and_then(|c| c.check_paths().map(|_| c)),
    };
    cfg.map_err(usage)
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(infra)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(infra)
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_limits(path: Option<&Path>, cfg: &PipelineConfig) -> Res<ExecutionLimits> {
    let Some(p) = path else { return Ok(cfg.limits.clone()) };
    let text = read(p)?;
    let limits: ExecutionLimits = if p.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| usage(anyhow!("{}: {e}", p.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| usage(anyhow!("{}: {e}", p.display())))?
    };
    limits.validate().map_err(usage)?;
    Ok(limits)
}

fn clients(cfg: &PipelineConfig) -> Res<Clients> {
    pipeline::clients_for(cfg).map_err(usage)
}

fn discover(cfg: &PipelineConfig, exec: Exec, a: DiscoverArgs) -> Res<()> {
    let tax_path = a.taxonomy.unwrap_or_else(|| cfg.registry.taxonomy.clone());
    let taxonomy = DomainTaxonomy::load(&tax_path).map_err(usage)?;
    let clients = clients(cfg)?;
    let mut fc = cfg.funnel.clone();
    fc.skip_expansion |= a.skip_expansion;
    let (pool, report) = run_funnel(&taxonomy, &clients, &fc, exec, a.stage).map_err(infra)?;
    write(&a.out, &pool.to_jsonl())?;
    write(&a.report, &json(&report))?;
    for w in &report.warnings {
        tracing::warn!(warning = %w, "funnel");
    }
    println!("{} candidates written to {}", pool.len(), a.out.display());
    Ok(())
}

/// Metadata for an `analyze` source: host metadata when the host knows the
/// repo, a stub otherwise.
fn source_for(source: &str, clients: &Clients) -> Res<(RepoMetadata, SourceLocation)> {
    let stub = |id: String, url: String| RepoMetadata {
        repo_id: id,
        url,
        license_id: "unknown".into(),
        primary_language: "unknown".into(),
        star_count: 0,
        is_archived: false,
        description: String::new(),
        topics: vec![],
    };
    let path = Path::new(source);
    if path.is_dir() {
        let abs = fs::canonicalize(path).map_err(|e| usage(anyhow!("{source}: {e}")))?;
        let name = abs.file_name().map_or("repo".into(), |n| n.to_string_lossy().into_owned());
        return Ok((stub(format!("local/{name}"), String::new()), SourceLocation::Local(abs)));
    }
    let id = source
        .trim_start_matches("https://")
        .trim_start_matches("http://")
        .trim_end_matches(".git")
        .trim_end_matches('/')
        .to_string();
    let meta = clients.repo(&id).map_err(infra)?.unwrap_or_else(|| stub(id.clone(), source.to_string()));
    let loc = match clients.host.local_checkout(&meta.repo_id) {
        Some(p) => SourceLocation::Local(p),
        None if !meta.url.is_empty() => SourceLocation::Remote(meta.url.clone()),
        None => return Err(usage(anyhow!("{source} is neither a directory nor a known repository"))),
    };
    Ok((meta, loc))
}

fn analyze(cfg: &PipelineConfig, a: AnalyzeArgs) -> Res<()> {
    let clients = clients(cfg)?;
    let (meta, loc) = source_for(&a.source, &clients)?;
    let opts = IngestOptions::new(cfg.workspace.join("snapshots"));
    let snap = analyzer::ingest(&meta, &loc, Some(&clients), &opts).map_err(infra)?;
    let doc = analyzer::analyze(&snap, Some(&clients), &EvidenceOptions::default());
    write(&a.out, &json(&doc))?;
    println!("evidence for {} written to {}", meta.repo_id, a.out.display());
    Ok(())
}

fn plan(cfg: &PipelineConfig, a: PlanArgs) -> Res<()> {
    let doc: analyzer::AnalysisDocument = serde_json::from_str(&read(&a.evidence)?)
        .map_err(|e| usage(anyhow!("{}: {e}", a.evidence.display())))?;
    let clients = clients(cfg)?;
    let proposer = pipeline::proposer_for(cfg, a.proposer.unwrap_or(cfg.recipe.proposer), &clients);
    let reviewer = pipeline::reviewer_for(a.reviewer.unwrap_or(cfg.recipe.reviewer), &clients);
    let rounds = a.max_rounds.unwrap_or(cfg.recipe.max_rounds);
    if rounds == 0 {
        return Err(usage(anyhow!("--max-rounds must be positive")));
    }
    let outcome = refine_loop(&doc.evidence, proposer.as_ref(), reviewer.as_ref(), rounds).map_err(infra)?;
    write(&a.transcript, &json(&outcome.transcript))?;
    write(&a.out, &outcome.spec.render())?;
    println!(
        "recipe {} written to {} after {} round(s)",
        outcome.spec.digest(),
        a.out.display(),
        outcome.transcript.rounds_used()
    );
    Ok(())
}

fn with_backend(cfg: &PipelineConfig, kind: Option<BackendKind>) -> PipelineConfig {
    let mut cfg = cfg.clone();
    if let Some(k) = kind {
        cfg.backend.kind = k;
    }
    cfg
}

fn build(cfg: &PipelineConfig, a: BuildArgs) -> Res<()> {
    let spec = BuildSpec::parse(&read(&a.spec)?).map_err(usage)?;
    let limits = load_limits(a.limits.as_deref(), cfg)?;
    let backend = pipeline::backend_for(&with_backend(cfg, a.backend)).map_err(usage)?;
    let log = a.log.unwrap_or_else(|| a.out.with_extension("log"));
    let result = build_image(&spec, &a.context, &limits, backend.as_ref(), &log).map_err(infra)?;
    write(&a.out, &json(&result))?;
    match &result.image_digest {
        Some(d) => println!("built {d}"),
        None => println!(
            "build failed: {}",
            result.failure_category.map_or("unknown".to_string(), |c| c.to_string())
        ),
    }
    Ok(())
}

fn validate(cfg: &PipelineConfig, a: ValidateArgs) -> Res<()> {
    let limits = load_limits(a.limits.as_deref(), cfg)?;
    let backend = pipeline::backend_for(&with_backend(cfg, a.backend)).map_err(usage)?;
    let result = validate_tool(&a.digest, &a.cmd, &limits, backend.as_ref(), &a.log).map_err(infra)?;
    print!("{}", json(&result));
    Ok(())
}

fn run_all(cfg: &PipelineConfig, exec: Exec, a: RunAllArgs) -> Res<()> {
    let mut cfg = with_backend(cfg, a.backend);
    if let Some(p) = &a.budget {
        let b: Budget =
            serde_json::from_str(&read(p)?).map_err(|e| usage(anyhow!("{}: {e}", p.display())))?;
        cfg.scheduler.budget = b;
    }
    if let Some(t) = a.trace {
        cfg.trace.path = t;
    }
    cfg.validate().map_err(usage)?;
    let pool = pipeline::load_pool(&a.pool).map_err(|e| Failure { code: e.exit_code() as u8, err: e.into() })?;
    let pipe = Pipeline::from_config(&cfg, exec).map_err(|e| Failure { code: e.exit_code() as u8, err: e.into() })?;
    let summary = pipe.run_all(&pool).map_err(|e| Failure { code: e.exit_code() as u8, err: e.into() })?;
    println!(
        "candidates {} skipped {} successes {} failures {} registered {} retries {} long_tail {}",
        summary.candidates,
        summary.skipped,
        summary.successes,
        summary.failures,
        summary.registered,
        summary.retries,
        summary.long_tail
    );
    if summary.exit_code() != 0 {
        return Err(infra(anyhow!("infrastructure errors: {}", summary.infra_errors.join("; "))));
    }
    Ok(())
}

fn report(cfg: &PipelineConfig, exec: Exec, a: ReportArgs) -> Res<()> {
    let path = a.trace.unwrap_or_else(|| cfg.trace.path.clone());
    let ingested = trace::ingest(&path).map_err(usage)?;
    for e in &ingested.errors {
        tracing::warn!(line = e.line, error = %e.msg, "skipped trace line");
    }
    let summary = trace::summarize(&ingested.records, a.min_count, exec).map_err(usage)?;
    let rendered = trace::render(&summary, a.format);
    for (name, body) in &rendered.files {
        write(&a.out.join(name), body)?;
    }
    if a.format == ReportFormat::Text {
        if let Some((_, body)) = rendered.files.first() {
            print!("{body}");
        }
    }
    Ok(())
}

fn search(cfg: &PipelineConfig, a: SearchArgs) -> Res<()> {
    let reg = Registry::open(&cfg.registry.path).map_err(usage)?;
    let clients = clients(cfg)?;
    let filter = SearchFilter { domain: a.domain, tag: a.tag, language: a.language };
    let hits = reg.search(&a.query, &filter, clients.embedder.as_ref()).map_err(infra)?;
    for h in hits.iter().filter(|h| h.score > 0.0).take(a.limit) {
        let line = serde_json::json!({
            "score": h.score,
            "tool_id": h.entry.tool_id,
            "name": h.entry.name,
            "domains": h.entry.domains.iter().map(|d| &d.domain_id).collect::<Vec<_>>(),
        });
        println!("{line}");
    }
    Ok(())
}

fn export(cfg: &PipelineConfig, a: ExportArgs) -> Res<()> {
    let reg = Registry::open(&cfg.registry.path).map_err(usage)?;
    let manifest = reg.export_manifest(&a.tool_id).map_err(usage)?;
    match a.out {
        Some(p) => write(&p, &manifest),
        None => {
            print!("{manifest}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.cmd {
        Cmd::Discover(a) => discover(&cfg, exec, a),
        Cmd::Analyze(a) => analyze(&cfg, a),
        Cmd::Plan(a) => plan(&cfg, a),
        Cmd::Build(a) => build(&cfg, a),
        Cmd::Validate(a) => validate(&cfg, a),
        Cmd::RunAll(a) => run_all(&cfg, exec, a),
        Cmd::Report(a) => report(&cfg, exec, a),
        Cmd::Search(a) => search(&cfg, a),
        Cmd::Export(a) => export(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

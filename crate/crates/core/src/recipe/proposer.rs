use serde_json::json;

use super::docs::{install_commands, snippet_commands, usage_commands};
use super::dockerfile::normalize_dockerfile;
use super::images::BaseImages;
use super::project::{
    automake_programs, cargo_binaries, cmake_executables, make_default_target, maven_jar, parse_package_json,
    parse_pyproject, parse_setup_py,
};
use super::review::ReviewFinding;
use super::shell::{interactive_violation, normalize_pip, split_commands};
use super::spec::{BuildSpec, ImageRef};
use super::ProposalError;
use crate::analyzer::{EvidenceBundle, ManifestKind};
use crate::clients::{Clients, PromptContext, Role};

pub const DEFAULT_WORKDIR: &str = "/app";

/// Produces candidate specs from evidence.
pub trait Proposer: Send + Sync {
    fn propose(&self, evidence: &EvidenceBundle) -> Result<BuildSpec, ProposalError>;

    /// A fresh spec after the reviewer asked for regeneration.
    fn regenerate(
        &self,
        evidence: &EvidenceBundle,
        previous: &BuildSpec,
        findings: &[ReviewFinding],
    ) -> Result<BuildSpec, ProposalError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ecosystem {
    Python,
    Cmake,
    Autotools,
    Make,
    Node,
    Rust,
    Java,
    DocsOnly,
}

fn is_root(path: &str) -> bool {
    !path.contains('/')
}

fn root_manifest(ev: &EvidenceBundle, kind: ManifestKind) -> Option<&str> {
    ev.manifest_excerpts
        .iter()
        .filter(|m| m.kind == kind && is_root(&m.path))
        .map(|m| m.path.as_str())
        .min()
}

fn has_root(ev: &EvidenceBundle, kind: ManifestKind) -> bool {
    root_manifest(ev, kind).is_some()
}

fn has_python_manifest(ev: &EvidenceBundle) -> bool {
    has_root(ev, ManifestKind::PythonRequirements)
        || has_root(ev, ManifestKind::PythonProject)
        || has_root(ev, ManifestKind::PythonSetup)
        || ev.file_index.iter().any(|p| p.starts_with("requirements/") && p.ends_with(".txt"))
}

/// Which template family applies, by primary language first and then by a
/// fixed manifest order.
pub fn detect_ecosystem(ev: &EvidenceBundle) -> Ecosystem {
    let c_family = || {
        if has_root(ev, ManifestKind::Cmake) {
            Some(Ecosystem::Cmake)
        } else if has_root(ev, ManifestKind::Autotools) {
            Some(Ecosystem::Autotools)
        } else if has_root(ev, ManifestKind::Make) {
            Some(Ecosystem::Make)
        } else {
            None
        }
    };
    let by_language = match ev.primary_language.as_str() {
        "Python" | "Jupyter Notebook" if has_python_manifest(ev) => Some(Ecosystem::Python),
        "C" | "C++" | "Fortran" | "CUDA" => c_family(),
        "JavaScript" | "TypeScript" if has_root(ev, ManifestKind::NodePackage) => Some(Ecosystem::Node),
        "Rust" if has_root(ev, ManifestKind::RustManifest) => Some(Ecosystem::Rust),
        "Java" | "Kotlin" | "Scala" if has_root(ev, ManifestKind::JavaBuild) => Some(Ecosystem::Java),
        _ => None,
    };
    if let Some(e) = by_language {
        return e;
    }
    if has_python_manifest(ev) {
        return Ecosystem::Python;
    }
    if let Some(e) = c_family() {
        return e;
    }
    if has_root(ev, ManifestKind::NodePackage) {
        return Ecosystem::Node;
    }
    if has_root(ev, ManifestKind::RustManifest) {
        return Ecosystem::Rust;
    }
    if has_root(ev, ManifestKind::JavaBuild) {
        return Ecosystem::Java;
    }
    Ecosystem::DocsOnly
}

/// Root requirements file a template installs from.
pub fn primary_requirements(ev: &EvidenceBundle) -> Option<String> {
    if ev.has_file("requirements.txt") {
        return Some("requirements.txt".into());
    }
    let root = ev
        .file_index
        .iter()
        .filter(|p| is_root(p) && p.starts_with("requirements") && p.ends_with(".txt"))
        .filter(|p| !p.contains("dev") && !p.contains("test") && !p.contains("doc"))
        .min();
    if let Some(p) = root {
        return Some(p.clone());
    }
    for preferred in ["requirements/base.txt", "requirements/prod.txt", "requirements/main.txt"] {
        if ev.has_file(preferred) {
            return Some(preferred.into());
        }
    }
    None
}

fn python_project(ev: &EvidenceBundle) -> super::project::PythonProject {
    if let Some(p) = root_manifest(ev, ManifestKind::PythonProject).and_then(|p| ev.text_of(p)) {
        let proj = parse_pyproject(p);
        if proj.name.is_some() || !proj.scripts.is_empty() {
            return proj;
        }
    }
    if let Some(t) = ev.text_of("setup.py") {
        return parse_setup_py(t);
    }
    Default::default()
}

/// Console-script and bin names the repository declares.
pub fn declared_commands(ev: &EvidenceBundle) -> Vec<String> {
    let mut out = python_project(ev).scripts;
    if let Some(t) = ev.text_of("package.json") {
        out.extend(parse_package_json(t).bins.into_iter().map(|(n, _)| n));
    }
    out.sort();
    out.dedup();
    out
}

pub fn make_program_for(ev: &EvidenceBundle) -> Option<String> {
    let text = ev.text_of(root_manifest(ev, ManifestKind::Make)?)?;
    let target = make_default_target(text)?;
    if matches!(target.as_str(), "all" | "default" | "build") {
        // Use the first prerequisite of the aggregate target.
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("{target}:")))?;
        return line.split_once(':')?.1.split_whitespace().next().map(str::to_string);
    }
    Some(target)
}

fn python_module_main(ev: &EvidenceBundle) -> Option<String> {
    ev.file_index
        .iter()
        .filter_map(|p| {
            let p = p.strip_prefix("src/").unwrap_or(p);
            let pkg = p.strip_suffix("/__main__.py")?;
            (!pkg.contains('/')).then(|| pkg.to_string())
        })
        .min()
}

fn root_file_with_ext(ev: &EvidenceBundle, exts: &[&str], skip: &[&str]) -> Option<String> {
    ev.file_index
        .iter()
        .filter(|p| is_root(p))
        .filter(|p| exts.iter().any(|e| p.ends_with(e)))
        .filter(|p| {
            let lower = p.to_ascii_lowercase();
            !skip.iter().any(|s| lower.starts_with(s))
        })
        .min()
        .cloned()
}

fn with_workdir(workdir: &str, rel: &str) -> String {
    format!("{}/{}", workdir.trim_end_matches('/'), rel)
}

/// Entrypoint inferred from repository structure alone.
pub fn guess_entrypoint(ev: &EvidenceBundle, eco: Ecosystem, workdir: &str) -> Option<Vec<String>> {
    let v = |xs: &[&str]| Some(xs.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    match eco {
        Ecosystem::Python | Ecosystem::DocsOnly => {
            if eco == Ecosystem::Python {
                if let Some(s) = python_project(ev).scripts.first() {
                    return v(&[s]);
                }
                if let Some(m) = python_module_main(ev) {
                    return v(&["python", "-m", &m]);
                }
            }
            let snake = ev.name.replace('-', "_");
            let preferred = ["main.py", "cli.py", "run.py", "app.py", &format!("{snake}.py")];
            if let Some(p) = preferred.iter().find(|p| ev.has_file(p)) {
                return v(&["python", p]);
            }
            if let Some(p) = root_file_with_ext(ev, &[".py"], &["setup", "conftest", "test"]) {
                return v(&["python", &p]);
            }
            if eco == Ecosystem::DocsOnly {
                if let Some(p) = root_file_with_ext(ev, &[".R", ".r"], &[]) {
                    return v(&["Rscript", &p]);
                }
                if let Some(p) = root_file_with_ext(ev, &[".jl"], &[]) {
                    return v(&["julia", &p]);
                }
                if let Some(p) = root_file_with_ext(ev, &[".sh"], &["install", "setup", "build"]) {
                    return v(&["bash", &p]);
                }
            }
            None
        }
        Ecosystem::Cmake => {
            let text = ev.text_of(root_manifest(ev, ManifestKind::Cmake)?)?;
            let exe = cmake_executables(text).into_iter().next()?;
            v(&[&with_workdir(workdir, &format!("build/{exe}"))])
        }
        Ecosystem::Autotools => {
            let prog = ev
                .text_of("Makefile.am")
                .and_then(|t| automake_programs(t).into_iter().next())
                .or_else(|| make_program_for(ev))?;
            v(&[&with_workdir(workdir, &prog)])
        }
        Ecosystem::Make => {
            let prog = make_program_for(ev)?;
            v(&[&with_workdir(workdir, &prog)])
        }
        Ecosystem::Node => {
            let pkg = parse_package_json(ev.text_of("package.json")?);
            if let Some((_, path)) = pkg.bins.first() {
                return v(&["node", path.trim_start_matches("./")]);
            }
            if let Some(m) = pkg.main {
                return v(&["node", m.trim_start_matches("./")]);
            }
            ev.has_file("index.js").then(|| vec!["node".into(), "index.js".into()])
        }
        Ecosystem::Rust => {
            let bin = cargo_binaries(ev.text_of("Cargo.toml")?).into_iter().next()?;
            v(&[&with_workdir(workdir, &format!("target/release/{bin}"))])
        }
        Ecosystem::Java => {
            let jar = maven_jar(ev.text_of("pom.xml")?)?;
            v(&["java", "-jar", &with_workdir(workdir, &jar)])
        }
    }
}

/// Entrypoint named by README usage examples, trimmed to the program and
/// its script or module argument.
pub fn usage_entrypoint(ev: &EvidenceBundle) -> Option<Vec<String>> {
    let readme = ev.readme.as_ref()?;
    let declared = declared_commands(ev);
    for line in usage_commands(&readme.text) {
        let Some(cmd) = split_commands(&line).into_iter().next() else { continue };
        let words = &cmd.words;
        let prog = words[0].as_str();
        let ep: Option<Vec<String>> = match prog {
            "python" | "python3" => match words.get(1).map(String::as_str) {
                Some("-m") if words.len() >= 3 => Some(words[..3].to_vec()),
                Some(s) if !s.starts_with('-') => Some(words[..2].to_vec()),
                _ => None,
            },
            "Rscript" | "julia" | "bash" | "sh" | "node" | "perl" => {
                words.get(1).filter(|s| !s.starts_with('-')).map(|_| words[..2].to_vec())
            }
            "java" if words.get(1).map(String::as_str) == Some("-jar") && words.len() >= 3 => Some(words[..3].to_vec()),
            p if p.starts_with("./") => Some(vec![p.to_string()]),
            p if declared.iter().any(|d| d == p) => Some(vec![p.to_string()]),
            _ => None,
        };
        if ep.is_some() {
            return ep;
        }
    }
    None
}

fn validate_for(entrypoint: &[String]) -> Vec<String> {
    let mut v = entrypoint.to_vec();
    v.push("--help".into());
    v
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Semantic key for deduplicating install steps.
fn step_key(step: &str) -> String {
    let cmds = split_commands(step);
    if cmds.len() == 1 {
        if let Some(pip) = normalize_pip(&cmds[0]) {
            if pip.args().first().map(String::as_str) == Some("install") {
                if let Some(r) = pip.flag_value(&["-r", "--requirement"]) {
                    return format!("pip-r:{}", r.trim_start_matches("./"));
                }
                let pos = pip.positionals(&["-r", "-c", "-e", "--requirement"]);
                if pip.has_flag(&["-e"]) || pos.get(1).is_some_and(|p| *p == "." || *p == "./") {
                    return "pip-local".into();
                }
            }
        }
    }
    squash(step)
}

struct Draft {
    base: ImageRef,
    packages: Vec<String>,
    steps: Vec<String>,
}

impl Draft {
    fn add_packages<'a>(&mut self, pkgs: impl IntoIterator<Item = &'a str>) {
        for p in pkgs {
            if !self.packages.iter().any(|x| x == p) {
                self.packages.push(p.to_string());
            }
        }
    }

    fn add_step(&mut self, step: String) {
        let key = step_key(&step);
        if !self.steps.iter().any(|s| step_key(s) == key) {
            self.steps.push(step);
        }
    }
}

/// Deterministic template-driven proposer.
#[derive(Debug, Clone, Default)]
pub struct RuleProposer {
    pub images: BaseImages,
    /// Templates only: no adoption of existing recipes and no commands taken
    /// from prose documentation.
    pub conservative: bool,
}

impl RuleProposer {
    pub fn new(images: BaseImages) -> Self {
        Self {
            images,
            conservative: false,
        }
    }

    fn template(&self, ev: &EvidenceBundle, eco: Ecosystem) -> Draft {
        let img = |s: &str| BaseImages::image(s);
        let mut d = Draft {
            base: img(&self.images.generic),
            packages: Vec::new(),
            steps: Vec::new(),
        };
        match eco {
            Ecosystem::Python => {
                d.base = img(&self.images.python);
                if let Some(r) = primary_requirements(ev) {
                    d.steps.push(format!("pip install --no-cache-dir -r {r}"));
                }
                if has_root(ev, ManifestKind::PythonProject) || ev.has_file("setup.py") {
                    d.steps.push("pip install --no-cache-dir .".into());
                }
            }
            Ecosystem::Cmake => {
                d.base = img(&self.images.c);
                d.packages.push("cmake".into());
                d.steps.push("cmake -S . -B build -DCMAKE_BUILD_TYPE=Release".into());
                d.steps.push("cmake --build build --parallel 2".into());
            }
            Ecosystem::Autotools => {
                d.base = img(&self.images.c);
                if !ev.has_file("configure") {
                    d.add_packages(["autoconf", "automake", "libtool"]);
                    d.steps.push("autoreconf -fi".into());
                }
                d.steps.push("./configure".into());
                d.steps.push("make".into());
            }
            Ecosystem::Make => {
                d.base = img(&self.images.c);
                d.steps.push("make".into());
            }
            Ecosystem::Node => {
                d.base = img(&self.images.node);
                d.steps.push("npm install".into());
            }
            Ecosystem::Rust => {
                d.base = img(&self.images.rust);
                d.steps.push("cargo build --release".into());
            }
            Ecosystem::Java => {
                d.base = img(&self.images.java);
                d.steps.push("mvn -q -DskipTests package".into());
            }
            Ecosystem::DocsOnly => {
                d.base = img(match ev.primary_language.as_str() {
                    "Python" | "Jupyter Notebook" => &self.images.python,
                    "C" | "C++" | "Fortran" => &self.images.c,
                    "R" => &self.images.r,
                    "Julia" => &self.images.julia,
                    "JavaScript" | "TypeScript" => &self.images.node,
                    _ => &self.images.generic,
                });
            }
        }
        d
    }

    fn absorb_commands(&self, d: &mut Draft, ev: &EvidenceBundle, lines: Vec<String>) {
        for line in lines {
            let mut line = squash(&line);
            let cd_repo = format!("cd {} && ", ev.name);
            if let Some(rest) = line.strip_prefix(&cd_repo) {
                line = rest.to_string();
            }
            let cmds = split_commands(&line);
            let Some(first) = cmds.first() else { continue };
            let prog = first.program().unwrap_or_default();
            if matches!(
                prog,
                "git" | "cd" | "conda" | "mamba" | "source" | "virtualenv" | "docker" | "brew" | "export" | "echo" | "yum" | "dnf"
            ) {
                continue;
            }
            if (prog == "python" || prog == "python3") && first.args().first().map(String::as_str) == Some("-m")
                && first.args().get(1).map(String::as_str) == Some("venv")
            {
                continue;
            }
            if cmds.iter().all(|c| matches!(c.program(), Some("apt-get") | Some("apt"))) {
                for c in &cmds {
                    let pos = c.positionals(&["-o", "-t"]);
                    if pos.first() == Some(&"install") {
                        d.add_packages(pos[1..].iter().copied());
                    }
                }
                continue;
            }
            if interactive_violation(&line).is_some() {
                continue;
            }
            d.add_step(line);
        }
    }

    fn assemble(&self, ev: &EvidenceBundle, conservative: bool) -> Result<BuildSpec, ProposalError> {
        if ev.is_empty() {
            return Err(ProposalError::NoEvidence);
        }
        let eco = detect_ecosystem(ev);
        let mut d = self.template(ev, eco);
        if !conservative {
            let mut lines = Vec::new();
            if let Some(r) = &ev.readme {
                lines.extend(install_commands(&r.text));
            }
            for doc in &ev.install_docs {
                lines.extend(install_commands(&doc.text));
            }
            for s in &ev.supplemental {
                lines.extend(snippet_commands(&s.text));
            }
            self.absorb_commands(&mut d, ev, lines);
        }
        if eco == Ecosystem::DocsOnly && d.steps.is_empty() && d.packages.is_empty() && ev.readme.is_none() {
            return Err(ProposalError::NoEvidence);
        }
        let entrypoint = (!conservative)
            .then(|| usage_entrypoint(ev))
            .flatten()
            .or_else(|| guess_entrypoint(ev, eco, DEFAULT_WORKDIR))
            .ok_or(ProposalError::NoEntrypoint)?;
        let spec = BuildSpec {
            base_image: d.base,
            system_packages: d.packages,
            env_vars: Vec::new(),
            copy_source: true,
            workdir: DEFAULT_WORKDIR.into(),
            build_steps: d.steps,
            validate_cmd: validate_for(&entrypoint),
            entrypoint,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn adopt(&self, ev: &EvidenceBundle) -> Option<BuildSpec> {
        let recipe = ev
            .container_recipes
            .iter()
            .filter(|r| is_root(&r.path))
            .min_by_key(|r| (r.path != "Dockerfile", r.path.clone()))?;
        let mut spec = normalize_dockerfile(&recipe.text, &self.images).ok()?;
        if spec.entrypoint.is_empty() {
            let eco = detect_ecosystem(ev);
            spec.entrypoint = usage_entrypoint(ev).or_else(|| guess_entrypoint(ev, eco, &spec.workdir))?;
            spec.validate_cmd = validate_for(&spec.entrypoint);
        }
        spec.validate().ok()?;
        Some(spec)
    }
}

impl Proposer for RuleProposer {
    fn propose(&self, ev: &EvidenceBundle) -> Result<BuildSpec, ProposalError> {
        if !self.conservative {
            if let Some(spec) = self.adopt(ev) {
                return Ok(spec);
            }
        }
        self.assemble(ev, self.conservative)
    }

    fn regenerate(
        &self,
        ev: &EvidenceBundle,
        _previous: &BuildSpec,
        _findings: &[ReviewFinding],
    ) -> Result<BuildSpec, ProposalError> {
        self.assemble(ev, true)
    }
}

/// Proposer backed by a text model; output is read as a Dockerfile and
/// normalized. One reprompt on unusable output.
pub struct ModelProposer {
    pub clients: Clients,
    pub images: BaseImages,
}

impl ModelProposer {
    pub fn new(clients: Clients, images: BaseImages) -> Self {
        Self { clients, images }
    }

    fn payload(ev: &EvidenceBundle) -> serde_json::Value {
        let readme: String = ev
            .readme
            .as_ref()
            .map(|r| r.text.chars().take(2000).collect())
            .unwrap_or_default();
        json!({
            "name": ev.name,
            "commit_id": ev.commit_id,
            "primary_language": ev.primary_language,
            "manifests": ev.manifest_excerpts.iter().map(|m| m.path.clone()).collect::<Vec<_>>(),
            "container_recipes": ev.container_recipes.iter().map(|m| m.path.clone()).collect::<Vec<_>>(),
            "readme_excerpt": readme,
        })
    }

    fn parse(&self, text: &str, ev: &EvidenceBundle) -> Result<BuildSpec, String> {
        let body = strip_code_fence(text);
        let mut spec = normalize_dockerfile(body, &self.images).map_err(|e| e.to_string())?;
        if spec.entrypoint.is_empty() {
            let eco = detect_ecosystem(ev);
            spec.entrypoint = guess_entrypoint(ev, eco, &spec.workdir).ok_or("no entrypoint")?;
            spec.validate_cmd = validate_for(&spec.entrypoint);
        }
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    fn ask(&self, task: &str, ev: &EvidenceBundle, extra: serde_json::Value) -> Result<BuildSpec, ProposalError> {
        let mut payload = Self::payload(ev);
        if let (Some(p), Some(e)) = (payload.as_object_mut(), extra.as_object()) {
            p.extend(e.clone());
        }
        let ctx = PromptContext::new(task, &ev.repo_id, payload.clone());
        let first = self.clients.complete_text(Role::Proposer, &ctx).map_err(ProposalError::Client)?;
        match self.parse(&first.response_text, ev) {
            Ok(s) => Ok(s),
            Err(e) => {
                let mut retry = payload;
                retry["error"] = json!(e);
                let ctx = PromptContext::new(&format!("{task}_retry"), &ev.repo_id, retry);
                let second = self.clients.complete_text(Role::Proposer, &ctx).map_err(ProposalError::Client)?;
                self.parse(&second.response_text, ev)
                    .map_err(|msg| ProposalError::Unparseable { msg })
            }
        }
    }
}

fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.split_once('\n').map(|(_, r)| r).unwrap_or("");
        return rest.trim_end().strip_suffix("```").unwrap_or(rest);
    }
    text
}

impl Proposer for ModelProposer {
    fn propose(&self, ev: &EvidenceBundle) -> Result<BuildSpec, ProposalError> {
        if ev.is_empty() {
            return Err(ProposalError::NoEvidence);
        }
        self.ask("propose_spec", ev, json!({}))
    }

    fn regenerate(
        &self,
        ev: &EvidenceBundle,
        previous: &BuildSpec,
        findings: &[ReviewFinding],
    ) -> Result<BuildSpec, ProposalError> {
        self.ask(
            "regenerate_spec",
            ev,
            json!({ "previous_digest": previous.digest(), "findings": findings }),
        )
    }
}

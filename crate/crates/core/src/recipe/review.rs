use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::images::eol_rule;
use super::project::{automake_programs, cmake_executables, normalize_dist, parse_package_json, parse_requirements};
use super::proposer::{declared_commands, detect_ecosystem, guess_entrypoint, primary_requirements};
use super::shell::{normalize_pip, split_commands, SimpleCommand};
use super::spec::{BuildSpec, ImageRef};
use super::ReviewError;
use crate::analyzer::{EvidenceBundle, ManifestKind};
use crate::clients::{mock::NO_OBJECTIONS, Clients, PromptContext, Role};

/// Evidence reference for findings about something absent from the tree.
pub const FILE_INDEX_REF: &str = "file_index";
pub const EOL_POLICY_REF: &str = "policy:eol_images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Blocker,
    Warning,
}

/// A concrete change to a spec. Step indices refer to the spec the finding
/// was raised against; step text is carried so stale edits are detectable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SpecEdit {
    SetBaseImage { image: ImageRef },
    RemoveStep { index: usize, step: String },
    ReplaceStep { index: usize, from: String, to: String },
    InsertStep { index: usize, step: String },
    AddSystemPackages { packages: Vec<String> },
    SetEntrypoint { entrypoint: Vec<String>, validate_cmd: Vec<String> },
    SetCopySource { value: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFinding {
    pub rule: String,
    pub severity: Severity,
    /// Field path in the spec, e.g. `build_steps[2]`.
    pub target: String,
    pub claim: String,
    pub evidence_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_edit: Option<SpecEdit>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub needs_regeneration: bool,
}

impl ReviewFinding {
    pub fn is_blocker(&self) -> bool {
        self.severity == Severity::Blocker
    }

    /// Blockers carry an edit or ask for regeneration; references resolve.
    pub fn is_well_formed(&self, evidence: &EvidenceBundle) -> bool {
        let remedy = !self.is_blocker() || self.proposed_edit.is_some() || self.needs_regeneration;
        remedy && resolves(evidence, &self.evidence_ref)
    }

    /// Identity of the problem, independent of the proposed fix.
    pub fn key(&self) -> (String, String, String) {
        (self.rule.clone(), self.target.clone(), self.claim.clone())
    }
}

pub fn resolves(evidence: &EvidenceBundle, reference: &str) -> bool {
    reference == FILE_INDEX_REF || reference.starts_with("policy:") || evidence.resolves(reference)
}

/// Applies edits against the spec they were computed from.
pub fn apply_edits(spec: &BuildSpec, edits: &[&SpecEdit]) -> BuildSpec {
    let mut out = spec.clone();
    let mut removed: BTreeSet<usize> = BTreeSet::new();
    let mut replaced: BTreeMap<usize, String> = BTreeMap::new();
    let mut inserts: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for e in edits {
        match e {
            SpecEdit::SetBaseImage { image } => out.base_image = image.clone(),
            SpecEdit::RemoveStep { index, step } => {
                if spec.build_steps.get(*index) == Some(step) {
                    removed.insert(*index);
                }
            }
            SpecEdit::ReplaceStep { index, from, to } => {
                if spec.build_steps.get(*index) == Some(from) {
                    replaced.entry(*index).or_insert_with(|| to.clone());
                }
            }
            SpecEdit::InsertStep { index, step } => {
                let slot = inserts.entry((*index).min(spec.build_steps.len())).or_default();
                if !slot.contains(step) && !spec.build_steps.contains(step) {
                    slot.push(step.clone());
                }
            }
            SpecEdit::AddSystemPackages { packages } => {
                for p in packages {
                    if !out.system_packages.contains(p) {
                        out.system_packages.push(p.clone());
                    }
                }
            }
            SpecEdit::SetEntrypoint {
                entrypoint,
                validate_cmd,
            } => {
                out.entrypoint = entrypoint.clone();
                out.validate_cmd = validate_cmd.clone();
            }
            SpecEdit::SetCopySource { value } => out.copy_source = *value,
        }
    }
    let mut steps = Vec::new();
    for (i, s) in spec.build_steps.iter().enumerate() {
        steps.extend(inserts.remove(&i).unwrap_or_default());
        if removed.contains(&i) {
            continue;
        }
        steps.push(replaced.get(&i).cloned().unwrap_or_else(|| s.clone()));
    }
    for (_, rest) in inserts {
        steps.extend(rest);
    }
    out.build_steps = steps;
    out
}

/// Reviews a spec against evidence.
pub trait Reviewer: Send + Sync {
    fn review(&self, spec: &BuildSpec, evidence: &EvidenceBundle) -> Result<Vec<ReviewFinding>, ReviewError>;
}

/// Deterministic rule reviewer.
///
/// * r1: files referenced by build steps exist in the tree
/// * r2: the base image is not on the end-of-life deny list
/// * r3: manifest-declared requirements are installed by some step
/// * r4: the entrypoint target exists or is produced by the build
#[derive(Debug, Clone, Default)]
pub struct RuleReviewer;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Ref {
    File(String),
    Dir(String),
}

fn clean_path(cwd: &str, raw: &str, workdir: &str) -> Option<String> {
    if raw.contains('$') || raw.contains('*') || raw.contains("://") || raw.is_empty() {
        return None;
    }
    let joined = if let Some(abs) = raw.strip_prefix('/') {
        let wd = workdir.trim_matches('/');
        if abs == wd {
            String::new()
        } else {
            abs.strip_prefix(&format!("{wd}/"))?.to_string()
        }
    } else if cwd.is_empty() {
        raw.to_string()
    } else {
        format!("{cwd}/{raw}")
    };
    let mut parts: Vec<&str> = Vec::new();
    for p in joined.split('/') {
        match p {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            p => parts.push(p),
        }
    }
    Some(parts.join("/"))
}

/// Paths that earlier commands create, so later references to them are fine.
#[derive(Default)]
struct Produced {
    dirs: BTreeSet<String>,
    files: BTreeSet<String>,
    opaque: bool,
}

impl Produced {
    fn covers(&self, path: &str) -> bool {
        self.opaque
            || self.files.contains(path)
            || self
                .dirs
                .iter()
                .any(|d| path == d || path.starts_with(&format!("{d}/")))
    }
}

fn command_refs(cmd: &SimpleCommand) -> Vec<Ref> {
    let Some(prog) = cmd.program() else { return Vec::new() };
    let mut out = Vec::new();
    if let Some(pip) = normalize_pip(cmd) {
        for f in ["-r", "--requirement", "-c", "--constraint"] {
            let mut args = pip.args().iter();
            while let Some(a) = args.next() {
                if a == f {
                    if let Some(v) = args.next() {
                        out.push(Ref::File(v.clone()));
                    }
                } else if let Some(v) = a.strip_prefix(&format!("{f}=")) {
                    out.push(Ref::File(v.to_string()));
                }
            }
        }
        for p in pip.positionals(&["-r", "--requirement", "-c", "--constraint", "-e", "-i", "--index-url"]) {
            if p.starts_with("./") || p.starts_with("../") {
                out.push(Ref::Dir(p.to_string()));
            } else if p.ends_with(".whl") || p.ends_with(".tar.gz") {
                out.push(Ref::File(p.to_string()));
            }
        }
        return out;
    }
    match prog {
        "bash" | "sh" | "source" | "." | "perl" | "Rscript" | "julia" | "node" => {
            if let Some(f) = cmd.positionals(&[]).first() {
                out.push(Ref::File(f.to_string()));
            }
        }
        p if p.starts_with("python") => {
            if !cmd.has_flag(&["-m", "-c"]) {
                if let Some(f) = cmd.positionals(&[]).first() {
                    out.push(Ref::File(f.to_string()));
                }
            }
        }
        "make" | "gmake" => {
            if let Some(f) = cmd.flag_value(&["-f", "--file", "--makefile"]) {
                out.push(Ref::File(f.to_string()));
            }
            if let Some(d) = cmd.flag_value(&["-C", "--directory"]) {
                out.push(Ref::Dir(d.to_string()));
            }
        }
        "cmake" => {
            if let Some(d) = cmd.flag_value(&["-S"]) {
                out.push(Ref::Dir(d.to_string()));
            }
        }
        "cd" => {
            if let Some(d) = cmd.args().first() {
                out.push(Ref::Dir(d.clone()));
            }
        }
        p if p.starts_with("./") || (p.contains('/') && !p.starts_with('/')) => out.push(Ref::File(p.to_string())),
        _ => {}
    }
    out
}

fn record_products(cmd: &SimpleCommand, cwd: &str, workdir: &str, produced: &mut Produced) {
    let Some(prog) = cmd.program() else { return };
    let dir = |raw: &str| clean_path(cwd, raw, workdir);
    match prog {
        "mkdir" => {
            for d in cmd.positionals(&["-m"]) {
                if let Some(d) = dir(d) {
                    produced.dirs.insert(d);
                }
            }
        }
        "cmake" => {
            if let Some(d) = cmd.flag_value(&["-B"]).and_then(dir) {
                produced.dirs.insert(d);
            }
        }
        "autoreconf" | "autoconf" => {
            produced.files.insert(clean_path(cwd, "configure", workdir).unwrap_or_default());
        }
        p if p.ends_with("autogen.sh") => {
            produced.files.insert(clean_path(cwd, "configure", workdir).unwrap_or_default());
        }
        "touch" | "cp" | "mv" | "ln" => {
            if let Some(last) = cmd.positionals(&[]).last().and_then(|p| dir(p)) {
                produced.files.insert(last.clone());
                produced.dirs.insert(last);
            }
        }
        "git" | "wget" | "curl" | "tar" | "unzip" => produced.opaque = true,
        "cargo" => {
            produced.dirs.insert(clean_path(cwd, "target", workdir).unwrap_or_default());
        }
        "npm" | "yarn" => {
            produced.dirs.insert(clean_path(cwd, "node_modules", workdir).unwrap_or_default());
        }
        _ => {}
    }
}

fn exists(ev: &EvidenceBundle, r: &Ref) -> bool {
    match r {
        Ref::File(p) => ev.has_file(p),
        Ref::Dir(d) if d.is_empty() => true,
        Ref::Dir(d) => {
            let prefix = format!("{d}/");
            ev.has_file(d) || ev.file_index.iter().any(|p| p.starts_with(&prefix))
        }
    }
}

fn same_basename(ev: &EvidenceBundle, path: &str) -> Option<String> {
    let base = path.rsplit('/').next()?;
    let hits: Vec<&String> = ev
        .file_index
        .iter()
        .filter(|p| p.rsplit('/').next() == Some(base) && p.as_str() != path)
        .collect();
    (hits.len() == 1).then(|| hits[0].clone())
}

fn check_r1(spec: &BuildSpec, ev: &EvidenceBundle) -> Vec<ReviewFinding> {
    let mut out = Vec::new();
    let mut produced = Produced::default();
    let wd = &spec.workdir;
    for (i, step) in spec.build_steps.iter().enumerate() {
        let mut cwd = String::new();
        let mut missing: Vec<(String, String)> = Vec::new();
        let mut outside = false;
        for cmd in split_commands(step) {
            if outside {
                break;
            }
            for r in command_refs(&cmd) {
                let (raw, is_dir) = match &r {
                    Ref::File(p) => (p.clone(), false),
                    Ref::Dir(d) => (d.clone(), true),
                };
                let Some(path) = clean_path(&cwd, &raw, wd) else {
                    if cmd.program() == Some("cd") {
                        outside = true;
                    }
                    continue;
                };
                let resolved = if is_dir { Ref::Dir(path.clone()) } else { Ref::File(path.clone()) };
                if !produced.covers(&path) && !exists(ev, &resolved) {
                    missing.push((raw, path));
                }
            }
            record_products(&cmd, &cwd, wd, &mut produced);
            if cmd.program() == Some("cd") {
                match cmd.args().first().and_then(|d| clean_path(&cwd, d, wd)) {
                    Some(d) => cwd = d,
                    None => outside = true,
                }
            }
        }
        if missing.is_empty() {
            continue;
        }
        if !spec.copy_source && missing.iter().any(|(_, p)| ev.has_file(p)) {
            out.push(ReviewFinding {
                rule: "r1".into(),
                severity: Severity::Blocker,
                target: "copy_source".into(),
                claim: "build steps use repository files but the source is not copied".into(),
                evidence_ref: FILE_INDEX_REF.into(),
                proposed_edit: Some(SpecEdit::SetCopySource { value: true }),
                needs_regeneration: false,
            });
            return out;
        }
        let names: Vec<&str> = missing.iter().map(|(_, p)| p.as_str()).collect();
        // A relocated file is recoverable when the step ran from the root.
        let relocated: Option<Vec<(String, String)>> = missing
            .iter()
            .map(|(raw, p)| {
                let to = same_basename(ev, p)?;
                (!raw.starts_with('/') && !step.contains("cd ")).then(|| (raw.clone(), to))
            })
            .collect();
        let edit = match relocated {
            Some(pairs) => {
                let mut to = step.clone();
                for (raw, new) in pairs {
                    to = replace_word(&to, &raw, &new);
                }
                SpecEdit::ReplaceStep {
                    index: i,
                    from: step.clone(),
                    to,
                }
            }
            None => SpecEdit::RemoveStep {
                index: i,
                step: step.clone(),
            },
        };
        out.push(ReviewFinding {
            rule: "r1".into(),
            severity: Severity::Blocker,
            target: format!("build_steps[{i}]"),
            claim: format!("step references missing file(s): {}", names.join(", ")),
            evidence_ref: FILE_INDEX_REF.into(),
            proposed_edit: Some(edit),
            needs_regeneration: false,
        });
    }
    out
}

fn replace_word(text: &str, from: &str, to: &str) -> String {
    let is_boundary = |c: Option<char>| c.map_or(true, |c| c.is_whitespace() || c == '=' || c == '"' || c == '\'');
    let mut out = String::new();
    let mut last = 0;
    for (pos, _) in text.match_indices(from) {
        if pos < last {
            continue;
        }
        let before = text[..pos].chars().last();
        let after = text[pos + from.len()..].chars().next();
        if is_boundary(before) && is_boundary(after) {
            out.push_str(&text[last..pos]);
            out.push_str(to);
            last = pos + from.len();
        }
    }
    out.push_str(&text[last..]);
    out
}

fn check_r2(spec: &BuildSpec) -> Vec<ReviewFinding> {
    eol_rule(&spec.base_image)
        .map(|rule| {
            let (n, t) = rule.replacement;
            ReviewFinding {
                rule: "r2".into(),
                severity: Severity::Blocker,
                target: "base_image".into(),
                claim: format!("base image {} is end-of-life", spec.base_image),
                evidence_ref: EOL_POLICY_REF.into(),
                proposed_edit: Some(SpecEdit::SetBaseImage {
                    image: ImageRef::new(n, t),
                }),
                needs_regeneration: false,
            }
        })
        .into_iter()
        .collect()
}

#[derive(Default)]
struct Installs {
    req_files: BTreeSet<String>,
    packages: BTreeSet<String>,
    local: bool,
    last_pip: Option<usize>,
    npm: bool,
}

fn scan_installs(spec: &BuildSpec) -> Installs {
    let mut out = Installs::default();
    for (i, step) in spec.build_steps.iter().enumerate() {
        let mut cwd_root = true;
        for cmd in split_commands(step) {
            if cmd.program() == Some("cd") {
                cwd_root = false;
            }
            if let Some(pip) = normalize_pip(&cmd) {
                if pip.args().first().map(String::as_str) != Some("install") {
                    continue;
                }
                out.last_pip = Some(i);
                let mut args = pip.args()[1..].iter();
                while let Some(a) = args.next() {
                    match a.as_str() {
                        "-r" | "--requirement" => {
                            if let Some(f) = args.next() {
                                out.req_files.insert(f.trim_start_matches("./").to_string());
                            }
                        }
                        "-e" | "--editable" => {
                            if let Some(p) = args.next() {
                                if (p == "." || p == "./") && cwd_root {
                                    out.local = true;
                                }
                            }
                        }
                        "-c" | "--constraint" | "-i" | "--index-url" | "--extra-index-url" | "-f" => {
                            args.next();
                        }
                        a if a.starts_with('-') => {
                            if let Some(f) = a.strip_prefix("--requirement=") {
                                out.req_files.insert(f.to_string());
                            }
                        }
                        "." | "./" if cwd_root => out.local = true,
                        a => {
                            let name = a.split(['=', '<', '>', '[', '~', '!']).next().unwrap_or(a);
                            out.packages.insert(normalize_dist(name));
                        }
                    }
                }
            }
            if let Some(p) = cmd.program() {
                if p.starts_with("python") && cmd.args().first().map(String::as_str) == Some("setup.py") {
                    if cmd.args().get(1).is_some_and(|a| a == "install" || a == "develop") {
                        out.local = true;
                        out.last_pip = Some(i);
                    }
                }
                if (p == "npm" && cmd.args().first().is_some_and(|a| a == "install" || a == "ci" || a == "i"))
                    || p == "yarn"
                {
                    out.npm = true;
                }
            }
        }
    }
    out
}

fn check_r3(spec: &BuildSpec, ev: &EvidenceBundle) -> Vec<ReviewFinding> {
    let mut out = Vec::new();
    let inst = scan_installs(spec);
    let python_env = inst.last_pip.is_some() || spec.base_image.name == "python";
    let at = inst.last_pip.map(|i| i + 1).unwrap_or(0);
    if python_env {
        if let Some(req) = primary_requirements(ev) {
            let listed = ev.text_of(&req).map(parse_requirements).unwrap_or_default();
            let all_named = !listed.packages.is_empty() && listed.packages.iter().all(|p| inst.packages.contains(p));
            let uncovered: Vec<&String> = listed.packages.iter().filter(|p| !inst.packages.contains(*p)).collect();
            if !inst.req_files.contains(&req) && !all_named && !(listed.packages.is_empty() && listed.includes.is_empty()) {
                let claim = if uncovered.is_empty() {
                    format!("{req} is never installed")
                } else {
                    let names: Vec<&str> = uncovered.iter().map(|s| s.as_str()).collect();
                    format!("{req} requires {} but no step installs them", names.join(", "))
                };
                out.push(ReviewFinding {
                    rule: "r3".into(),
                    severity: Severity::Blocker,
                    target: "build_steps".into(),
                    claim,
                    evidence_ref: req.clone(),
                    proposed_edit: Some(SpecEdit::InsertStep {
                        index: at,
                        step: format!("pip install --no-cache-dir -r {req}"),
                    }),
                    needs_regeneration: false,
                });
            }
        }
        let project = ev
            .manifest_excerpts
            .iter()
            .filter(|m| !m.path.contains('/'))
            .find(|m| {
                (m.kind == ManifestKind::PythonProject && m.text.contains("[project]"))
                    || (m.kind == ManifestKind::PythonProject && m.text.contains("[tool.poetry]"))
                    || m.path == "setup.py"
            });
        if let Some(m) = project {
            if !inst.local {
                out.push(ReviewFinding {
                    rule: "r3".into(),
                    severity: Severity::Blocker,
                    target: "build_steps".into(),
                    claim: format!("package declared in {} is never installed", m.path),
                    evidence_ref: m.path.clone(),
                    proposed_edit: Some(SpecEdit::InsertStep {
                        index: at,
                        step: "pip install --no-cache-dir .".into(),
                    }),
                    needs_regeneration: false,
                });
            }
        }
    }
    if let Some(pkg) = ev.text_of("package.json").map(parse_package_json) {
        if !pkg.dependencies.is_empty() && !inst.npm && spec.base_image.name == "node" {
            out.push(ReviewFinding {
                rule: "r3".into(),
                severity: Severity::Blocker,
                target: "build_steps".into(),
                claim: "package.json dependencies are never installed".into(),
                evidence_ref: "package.json".into(),
                proposed_edit: Some(SpecEdit::InsertStep {
                    index: 0,
                    step: "npm install".into(),
                }),
                needs_regeneration: false,
            });
        }
    }
    out
}

const BASE_TOOLS: &[&str] = &["python", "python3", "node", "java", "Rscript", "R", "julia", "bash", "sh", "perl"];

fn steps_mention(spec: &BuildSpec, program: &str) -> bool {
    spec.build_steps
        .iter()
        .flat_map(|s| split_commands(s))
        .any(|c| c.program() == Some(program))
}

/// Whether the entrypoint's program or script will exist in the image.
pub fn entrypoint_target_ok(spec: &BuildSpec, entrypoint: &[String], ev: &EvidenceBundle) -> Result<(), String> {
    let Some(prog) = entrypoint.first() else {
        return Err("empty entrypoint".into());
    };
    let wd = &spec.workdir;
    let rel = |p: &str| clean_path("", p, wd);
    let file_ok = |p: &str| rel(p).is_some_and(|r| ev.has_file(&r));
    match prog.as_str() {
        p if p.starts_with("python") && !p.contains('/') => {
            let arg = entrypoint.get(1).ok_or("python without a script")?;
            if arg == "-m" {
                let m = entrypoint.get(2).ok_or("python -m without a module")?;
                let path = m.replace('.', "/");
                let found = [format!("{path}.py"), format!("{path}/__main__.py"), format!("{path}/__init__.py")]
                    .iter()
                    .any(|c| ev.has_file(c) || ev.has_file(&format!("src/{c}")));
                return if found { Ok(()) } else { Err(format!("module {m} not found")) };
            }
            if arg == "-c" {
                return Ok(());
            }
            if file_ok(arg) {
                Ok(())
            } else {
                Err(format!("script {arg} not found"))
            }
        }
        "Rscript" | "julia" | "bash" | "sh" | "node" | "perl" => {
            let arg = entrypoint.get(1).ok_or("interpreter without a script")?;
            if arg == "-c" || arg == "-e" || file_ok(arg) {
                Ok(())
            } else {
                Err(format!("script {arg} not found"))
            }
        }
        "java" => {
            if steps_mention(spec, "mvn") || steps_mention(spec, "gradle") || entrypoint.get(2).is_some_and(|j| file_ok(j)) {
                Ok(())
            } else {
                Err("jar is neither present nor built".into())
            }
        }
        p if p.contains('/') => {
            let Some(r) = rel(p) else {
                return Err(format!("{p} is outside the work directory"));
            };
            if ev.has_file(&r) {
                return Ok(());
            }
            let base = r.rsplit('/').next().unwrap_or(&r).to_string();
            let cmake = ev.text_of("CMakeLists.txt").map(cmake_executables).unwrap_or_default();
            let automake = ev.text_of("Makefile.am").map(automake_programs).unwrap_or_default();
            let make_target = super::proposer::make_program_for(ev);
            let built = (r.starts_with("build/") && steps_mention(spec, "cmake") && (cmake.is_empty() || cmake.contains(&base)))
                || (r.starts_with("target/release/") && steps_mention(spec, "cargo"))
                || (!r.contains('/')
                    && steps_mention(spec, "make")
                    && (automake.contains(&base) || make_target.as_deref() == Some(base.as_str())));
            if built {
                Ok(())
            } else {
                Err(format!("{p} is neither in the repository nor produced by the build"))
            }
        }
        p => {
            let inst = scan_installs(spec);
            let known = BASE_TOOLS.contains(&p)
                || declared_commands(ev).iter().any(|d| d == p)
                || spec.system_packages.iter().any(|s| s == p)
                || inst.packages.contains(&normalize_dist(p));
            if known {
                Ok(())
            } else {
                Err(format!("command {p} is not provided by the image"))
            }
        }
    }
}

fn check_r4(spec: &BuildSpec, ev: &EvidenceBundle) -> Vec<ReviewFinding> {
    let Err(why) = entrypoint_target_ok(spec, &spec.entrypoint, ev) else {
        return Vec::new();
    };
    let guess = guess_entrypoint(ev, detect_ecosystem(ev), &spec.workdir)
        .filter(|g| *g != spec.entrypoint && entrypoint_target_ok(spec, g, ev).is_ok());
    let (proposed_edit, needs_regeneration) = match guess {
        Some(g) => {
            let mut v = g.clone();
            v.push("--help".into());
            (
                Some(SpecEdit::SetEntrypoint {
                    entrypoint: g,
                    validate_cmd: v,
                }),
                false,
            )
        }
        None => (None, true),
    };
    vec![ReviewFinding {
        rule: "r4".into(),
        severity: Severity::Blocker,
        target: "entrypoint".into(),
        claim: why,
        evidence_ref: FILE_INDEX_REF.into(),
        proposed_edit,
        needs_regeneration,
    }]
}

fn check_validate(spec: &BuildSpec) -> Vec<ReviewFinding> {
    if spec.validate_cmd.starts_with(&spec.entrypoint) {
        return Vec::new();
    }
    vec![ReviewFinding {
        rule: "w1".into(),
        severity: Severity::Warning,
        target: "validate_cmd".into(),
        claim: "validation command does not exercise the entrypoint".into(),
        evidence_ref: FILE_INDEX_REF.into(),
        proposed_edit: None,
        needs_regeneration: false,
    }]
}

impl Reviewer for RuleReviewer {
    fn review(&self, spec: &BuildSpec, ev: &EvidenceBundle) -> Result<Vec<ReviewFinding>, ReviewError> {
        let mut out = check_r2(spec);
        out.extend(check_r1(spec, ev));
        out.extend(check_r3(spec, ev));
        out.extend(check_r4(spec, ev));
        out.extend(check_validate(spec));
        Ok(out)
    }
}

/// Reviewer backed by a text model. The response is either the literal
/// "no objections" or a JSON array of findings.
pub struct ModelReviewer {
    pub clients: Clients,
}

impl Reviewer for ModelReviewer {
    fn review(&self, spec: &BuildSpec, ev: &EvidenceBundle) -> Result<Vec<ReviewFinding>, ReviewError> {
        let payload = json!({
            "proposal_digest": spec.digest(),
            "recipe": spec.render(),
            "file_count": ev.file_index.len(),
        });
        let ctx = PromptContext::new("review_spec", &ev.repo_id, payload);
        let ex = self
            .clients
            .complete_text(Role::Reviewer, &ctx)
            .map_err(ReviewError::Client)?;
        let text = ex.response_text.trim();
        if text.eq_ignore_ascii_case(NO_OBJECTIONS) {
            return Ok(Vec::new());
        }
        let findings: Vec<ReviewFinding> =
            serde_json::from_str(text).map_err(|e| ReviewError::Unparseable(e.to_string()))?;
        if let Some(bad) = findings.iter().find(|f| !f.is_well_formed(ev)) {
            return Err(ReviewError::Unparseable(format!(
                "finding on {} lacks a remedy or a resolvable reference",
                bad.target
            )));
        }
        Ok(findings)
    }
}

//! Interpreter for build recipes against a toy model of a container image.
//!
//! The model tracks files, executables on `PATH`, installed system and
//! language packages, and a handful of facts about the base image (distro
//! release, Python version, whether its package mirrors still exist). Build
//! steps are split into simple commands and dispatched to per-tool handlers
//! that check their inputs and record their products. Validation runs the
//! command against the stored image with networking off.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::digest::sha256_hex;
use crate::executor::{ExecError, ExitStatus, Phase};
use crate::recipe::project::{
    automake_programs, cargo_binaries, cmake_executables, dist_for_import, is_python_stdlib, make_default_target,
    maven_jar, normalize_dist, parse_package_json, parse_pyproject, parse_requirements, parse_setup_py, python_imports,
};
use crate::recipe::shell::{normalize_pip, split_commands, SimpleCommand};
use crate::recipe::{eol_rule, BuildSpec, ImageRef};

const MAX_SCRIPT_DEPTH: u32 = 4;
const MAX_TEXT_BYTES: u64 = 256 * 1024;
const GENERATED: &str = "# sim-generated";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exec: bool,
    /// Compiled output rather than source.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub binary: bool,
}

/// Everything the interpreter knows about a built image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldImage {
    pub base: String,
    pub codename: String,
    pub eol: bool,
    pub python: Option<String>,
    pub tools: BTreeSet<String>,
    pub apt_updated: bool,
    pub system_packages: BTreeSet<String>,
    pub python_dists: BTreeSet<String>,
    pub r_packages: BTreeSet<String>,
    /// Console script name to the module file it runs (may be empty).
    pub console_scripts: BTreeMap<String, String>,
    pub files: BTreeMap<String, SimFile>,
    pub dirs: BTreeSet<String>,
    pub workdir: String,
}

/// Facts about a known base image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseProfile {
    pub codename: String,
    pub python: Option<String>,
    pub tools: Vec<&'static str>,
    pub eol: bool,
}

const SHELL: &[&str] = &["sh", "bash"];
const APT: &[&str] = &["apt-get", "apt"];

fn leading_version(tag: &str) -> Option<String> {
    let v: String = tag.chars().take_while(|c| c.is_ascii_digit() || *c == '.').collect();
    let v = v.trim_end_matches('.');
    (!v.is_empty()).then(|| v.to_string())
}

fn ubuntu_codename(tag: &str) -> String {
    let v = leading_version(tag).unwrap_or_default();
    match v.as_str() {
        "12.04" => "precise",
        "14.04" => "trusty",
        "16.04" => "xenial",
        "18.04" => "bionic",
        "20.04" => "focal",
        "22.04" => "jammy",
        "24.04" => "noble",
        _ => tag.split('-').next().unwrap_or(tag),
    }
    .to_string()
}

fn debian_codename(tag: &str) -> String {
    const NAMES: &[&str] = &["jessie", "stretch", "buster", "bullseye", "bookworm", "trixie"];
    if let Some(n) = NAMES.iter().find(|n| tag.contains(**n)) {
        return n.to_string();
    }
    match leading_version(tag).as_deref().and_then(|v| v.split('.').next()) {
        Some("7") => "wheezy",
        Some("8") => "jessie",
        Some("9") => "stretch",
        Some("10") => "buster",
        Some("11") => "bullseye",
        Some("13") => "trixie",
        _ => "bookworm",
    }
    .to_string()
}

/// Python shipped by the distro's `python3` package.
fn distro_python(codename: &str) -> &'static str {
    match codename {
        "trusty" | "jessie" => "3.4",
        "xenial" | "stretch" => "3.5",
        "bionic" => "3.6",
        "buster" => "3.7",
        "focal" => "3.8",
        "bullseye" => "3.9",
        "jammy" => "3.10",
        "noble" => "3.12",
        _ => "3.11",
    }
}

pub fn base_profile(image: &ImageRef) -> Option<BaseProfile> {
    let name = image.name.strip_prefix("docker.io/").unwrap_or(&image.name);
    let name = name.strip_prefix("library/").unwrap_or(name);
    let tag = image.tag.as_str();
    let eol = eol_rule(image).is_some();
    let slim = tag.contains("slim");
    let debian_like = |extra: &[&'static str]| -> Vec<&'static str> {
        SHELL.iter().chain(APT).chain(extra).copied().collect()
    };
    let p = match name {
        "python" => {
            let ver = leading_version(tag)
                .map(|v| if v.contains('.') { v } else if v == "2" { "2.7".into() } else { "3.12".into() })
                .unwrap_or_else(|| "3.12".into());
            let alpine = tag.contains("alpine");
            let mut tools: Vec<&'static str> = if alpine { vec!["sh", "apk"] } else { debian_like(&[]) };
            tools.push("python");
            if ver.starts_with('2') {
                tools.extend(["python2", "pip", "pip2"]);
            } else {
                tools.extend(["python3", "pip", "pip3"]);
            }
            if !slim && !alpine {
                tools.extend(["gcc", "g++", "cc", "make", "git", "curl", "wget"]);
            }
            let codename = if alpine {
                "alpine".into()
            } else if eol {
                debian_codename(if tag.contains("jessie") || tag.contains("stretch") { tag } else { "buster" })
            } else {
                debian_codename(tag)
            };
            BaseProfile { codename, python: Some(ver), tools, eol }
        }
        "ubuntu" => BaseProfile { codename: ubuntu_codename(tag), python: None, tools: debian_like(&[]), eol },
        "debian" => BaseProfile { codename: debian_codename(tag), python: None, tools: debian_like(&[]), eol },
        "gcc" | "buildpack-deps" => BaseProfile {
            codename: if eol { "stretch".into() } else { "bookworm".into() },
            python: None,
            tools: debian_like(&[
                "gcc", "g++", "cc", "gfortran", "make", "autoconf", "autoreconf", "automake", "aclocal", "libtoolize",
                "pkg-config", "git", "curl", "wget", "patch",
            ]),
            eol,
        },
        "node" => {
            let mut tools = debian_like(&["node", "npm", "npx"]);
            if !slim {
                tools.extend(["git", "curl", "wget", "make", "gcc", "g++", "cc", "python3"]);
            }
            BaseProfile {
                codename: if eol { "buster".into() } else { "bookworm".into() },
                python: (!slim).then(|| "3.11".to_string()),
                tools,
                eol,
            }
        }
        "rust" => {
            let mut tools = debian_like(&["cargo", "rustc", "gcc", "cc"]);
            if !slim {
                tools.extend(["git", "curl", "wget", "make", "g++"]);
            }
            BaseProfile { codename: "bookworm".into(), python: None, tools, eol }
        }
        "maven" => BaseProfile {
            codename: "jammy".into(),
            python: None,
            tools: debian_like(&["mvn", "java", "javac", "git", "curl"]),
            eol,
        },
        "eclipse-temurin" | "openjdk" => BaseProfile {
            codename: "jammy".into(),
            python: None,
            tools: debian_like(&["java", "javac"]),
            eol,
        },
        "r-base" | "rocker/r-ver" => BaseProfile {
            codename: "trixie".into(),
            python: None,
            tools: debian_like(&["R", "Rscript"]),
            eol,
        },
        "julia" => BaseProfile { codename: "bookworm".into(), python: None, tools: debian_like(&["julia"]), eol },
        "alpine" => BaseProfile { codename: "alpine".into(), python: None, tools: vec!["sh", "apk"], eol },
        "continuumio/miniconda3" | "condaforge/miniforge3" => BaseProfile {
            codename: "bookworm".into(),
            python: Some("3.11".into()),
            tools: debian_like(&["conda", "mamba", "python", "python3", "pip", "pip3"]),
            eol,
        },
        "rockylinux" | "almalinux" | "fedora" | "centos" => BaseProfile {
            codename: name.into(),
            python: None,
            tools: vec!["sh", "bash", "dnf", "yum"],
            eol,
        },
        _ => return None,
    };
    Some(p)
}

/// Result of interpreting a whole build.
#[derive(Debug, Clone)]
pub struct Built {
    pub exit: ExitStatus,
    pub log: String,
    pub duration_s: f64,
    pub image: Option<WorldImage>,
    pub context_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub exit: ExitStatus,
    pub log: String,
    pub duration_s: f64,
}

struct Context {
    files: BTreeMap<String, SimFile>,
    fingerprint: String,
}

fn load_context(dir: &Path) -> Result<Context, ExecError> {
    let mut files = BTreeMap::new();
    let mut fp = String::new();
    let walker = WalkDir::new(dir)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(|e| ExecError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walk stays under root")
            .to_string_lossy()
            .replace('\\', "/");
        let bytes = fs::read(entry.path()).map_err(|source| ExecError::Io { path: entry.path().to_path_buf(), source })?;
        fp.push_str(&format!("{rel}\0{}\n", sha256_hex(&bytes)));
        let text = if bytes.len() as u64 <= MAX_TEXT_BYTES {
            String::from_utf8(bytes).ok()
        } else {
            None
        };
        #[cfg(unix)]
        let mode_exec = {
            use std::os::unix::fs::PermissionsExt;
            entry.metadata().map(|m| m.permissions().mode() & 0o111 != 0).unwrap_or(false)
        };
        #[cfg(not(unix))]
        let mode_exec = false;
        let exec = mode_exec || text.as_deref().is_some_and(|t| t.starts_with("#!"));
        files.insert(rel, SimFile { text, exec, binary: false });
    }
    Ok(Context { files, fingerprint: sha256_hex(fp) })
}

fn normalize_path(path: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for c in path.split('/') {
        match c {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            c => parts.push(c),
        }
    }
    format!("/{}", parts.join("/"))
}

fn parent(path: &str) -> String {
    match path.rfind('/') {
        Some(0) | None => "/".into(),
        Some(i) => path[..i].to_string(),
    }
}

fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Drops redirections (`> file`, `2>&1`, `<in`).
fn strip_redirections(words: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for w in words {
        if skip {
            skip = false;
            continue;
        }
        let t = w.trim_start_matches(|c: char| c.is_ascii_digit());
        if t.starts_with('>') || t.starts_with('<') {
            let op_only = t.trim_start_matches(['>', '<', '&']).is_empty();
            let fd_dup = t.contains('&') && t.len() > 1;
            if op_only && !fd_dup {
                skip = true;
            }
            continue;
        }
        out.push(w.clone());
    }
    out
}

struct Fail {
    code: i32,
}

type Step = Result<(), Fail>;

const SYSTEM_HEADERS: &[(&str, &str)] = &[
    ("zlib.h", "zlib1g-dev"),
    ("png.h", "libpng-dev"),
    ("hdf5.h", "libhdf5-dev"),
    ("fftw3.h", "libfftw3-dev"),
    ("gsl/gsl_math.h", "libgsl-dev"),
    ("gsl/gsl_rng.h", "libgsl-dev"),
    ("cblas.h", "libopenblas-dev"),
    ("lapacke.h", "liblapacke-dev"),
    ("netcdf.h", "libnetcdf-dev"),
    ("omp.h", ""),
    ("mpi.h", "libopenmpi-dev"),
    ("boost/program_options.hpp", "libboost-program-options-dev"),
    ("Eigen/Dense", "libeigen3-dev"),
    ("eigen3/Eigen/Dense", "libeigen3-dev"),
    ("foo.h", "libfoo-dev"),
    ("foo/foo.h", "libfoo-dev"),
];

const CMAKE_PACKAGES: &[(&str, &str)] = &[
    ("zlib", "zlib1g-dev"),
    ("png", "libpng-dev"),
    ("hdf5", "libhdf5-dev"),
    ("gsl", "libgsl-dev"),
    ("fftw3", "libfftw3-dev"),
    ("boost", "libboost-dev"),
    ("eigen3", "libeigen3-dev"),
    ("blas", "libopenblas-dev"),
    ("lapack", "liblapack-dev"),
    ("mpi", "libopenmpi-dev"),
    ("foo", "libfoo-dev"),
];

const MISC_APT: &[&str] = &[
    "ca-certificates", "gnupg", "locales", "tzdata", "sudo", "vim", "nano", "less", "procps", "file", "patch",
    "bison", "flex", "swig", "doxygen", "graphviz", "ghostscript", "imagemagick", "ffmpeg", "zlib1g", "zlib1g-dev",
    "software-properties-common", "openssh-client", "time", "xz-utils", "bzip2", "tar", "gzip", "unzip", "zip",
    "texlive", "pandoc", "hdf5-tools", "ninja-build", "python3-dev", "python3-venv", "python3-setuptools",
];

const NODE_BUILTINS: &[&str] = &[
    "fs", "path", "os", "util", "child_process", "http", "https", "url", "events", "stream", "crypto", "readline",
    "process", "assert", "zlib", "net", "buffer", "querystring", "worker_threads",
];

const R_BASE: &[&str] = &[
    "base", "stats", "utils", "methods", "graphics", "grDevices", "parallel", "tools", "grid", "splines", "stats4",
    "datasets", "compiler",
];

fn python_unavailable(name: &str) -> bool {
    name.starts_with("private-") || name.contains("nonexistent")
}

fn version_lt(v: &str, major: u32, minor: u32) -> bool {
    let mut it = v.split('.').map(|p| p.parse::<u32>().unwrap_or(0));
    let a = it.next().unwrap_or(0);
    let b = it.next().unwrap_or(0);
    (a, b) < (major, minor)
}

struct Interp {
    img: WorldImage,
    phase: Phase,
    log: Vec<String>,
    duration: f64,
    cwd: String,
    depth: u32,
}

impl Interp {
    fn say(&mut self, text: impl AsRef<str>) {
        for l in text.as_ref().lines() {
            self.log.push(l.to_string());
        }
    }

    fn fail(&mut self, code: i32, text: impl AsRef<str>) -> Step {
        self.say(text);
        Err(Fail { code })
    }

    fn abs(&self, p: &str) -> String {
        if let Some(rest) = p.strip_prefix("~/") {
            return normalize_path(&format!("/root/{rest}"));
        }
        if p.starts_with('/') {
            normalize_path(p)
        } else {
            normalize_path(&format!("{}/{p}", self.cwd))
        }
    }

    fn is_file(&self, abs: &str) -> bool {
        self.img.files.contains_key(abs)
    }

    fn is_dir(&self, abs: &str) -> bool {
        if abs == "/" || self.img.dirs.contains(abs) {
            return true;
        }
        let prefix = format!("{abs}/");
        self.img
            .files
            .range(prefix.clone()..)
            .next()
            .is_some_and(|(k, _)| k.starts_with(&prefix))
    }

    fn text(&self, abs: &str) -> Option<&str> {
        self.img.files.get(abs).and_then(|f| f.text.as_deref())
    }

    fn files_under(&self, dir: &str) -> Vec<String> {
        let prefix = if dir == "/" { "/".to_string() } else { format!("{dir}/") };
        self.img
            .files
            .range(prefix.clone()..)
            .take_while(|(k, _)| k.starts_with(&prefix))
            .map(|(k, _)| k.clone())
            .collect()
    }

    fn put(&mut self, abs: &str, file: SimFile) {
        self.img.dirs.insert(parent(abs));
        self.img.files.insert(abs.to_string(), file);
    }

    fn produce_binary(&mut self, abs: &str) {
        self.put(abs, SimFile { text: None, exec: true, binary: true });
    }

    fn install_tool(&mut self, name: &str) {
        self.img.tools.insert(name.to_string());
    }

    fn has_tool(&self, name: &str) -> bool {
        self.img.tools.contains(name)
            || self.img.console_scripts.contains_key(name)
            || self.is_file(&format!("/usr/local/bin/{name}"))
    }

    fn network(&self) -> bool {
        self.phase == Phase::Build
    }

    fn not_found(&mut self, prog: &str) -> Step {
        match self.phase {
            Phase::Build => self.fail(127, format!("/bin/sh: 1: {prog}: not found")),
            Phase::Validate => self.fail(
                127,
                format!("exec: \"{prog}\": executable file not found in $PATH"),
            ),
        }
    }

    // ---- entry points ----

    fn run_step(&mut self, step: &str) -> Step {
        let saved = self.cwd.clone();
        let r = self.run_line(step);
        self.cwd = saved;
        r
    }

    fn run_line(&mut self, line: &str) -> Step {
        let trimmed = line.trim_end();
        let tolerant = trimmed.ends_with("|| true") || trimmed.ends_with("|| :") || trimmed.ends_with("||true");
        for cmd in split_commands(line) {
            let words = strip_redirections(&cmd.words);
            if words.is_empty() {
                continue;
            }
            if let Err(f) = self.exec(&words) {
                if tolerant {
                    return Ok(());
                }
                return Err(f);
            }
        }
        Ok(())
    }

    fn exec(&mut self, words: &[String]) -> Step {
        let prog = words[0].as_str();
        let args = &words[1..];
        if prog.contains('/') {
            return self.exec_path(prog, args);
        }
        match prog {
            "cd" => return self.cd(args),
            "mkdir" => {
                for a in args.iter().filter(|a| !a.starts_with('-')) {
                    let p = self.abs(a);
                    self.img.dirs.insert(p);
                }
                return Ok(());
            }
            "touch" => {
                for a in args.iter().filter(|a| !a.starts_with('-')) {
                    let p = self.abs(a);
                    if !self.is_file(&p) {
                        self.put(&p, SimFile::default());
                    }
                }
                return Ok(());
            }
            "cp" | "mv" => return self.copy(prog, args),
            "chmod" => return self.chmod(args),
            "source" | "." => {
                return match args.first() {
                    Some(f) => {
                        let p = self.abs(f);
                        self.run_script("sh", &p, false)
                    }
                    None => Ok(()),
                }
            }
            "exit" => {
                let code = args.first().and_then(|c| c.parse::<i32>().ok()).unwrap_or(0);
                return if code == 0 { Ok(()) } else { Err(Fail { code }) };
            }
            "echo" | "true" | ":" | "export" | "set" | "unset" | "test" | "[" | "ls" | "cat" | "pwd" | "env"
            | "printf" | "sed" | "grep" | "tar" | "unzip" | "rm" | "ln" | "find" | "which" | "sleep" | "shopt"
            | "ulimit" | "umask" | "useradd" | "groupadd" | "adduser" | "chown" | "ldconfig" | "locale-gen"
            | "update-alternatives" | "head" | "tail" | "wc" | "sort" | "tee" | "xargs" | "rmdir" | "date"
            | "id" | "whoami" | "uname" | "nproc" | "gzip" | "gunzip" | "install" | "awk" | "dirname"
            | "basename" | "realpath" | "readlink" | "hash" | "type" | "command" | "ccache" => return Ok(()),
            "false" => return Err(Fail { code: 1 }),
            _ => {}
        }
        if let Some(pip) = normalize_pip(&SimpleCommand { words: words.to_vec() }) {
            if !self.has_tool(prog) {
                return self.not_found(prog);
            }
            if prog.starts_with("python") && !(self.has_tool("pip") || self.has_tool("pip3") || self.has_tool("pip2")) {
                return self.fail(1, format!("/usr/bin/{prog}: No module named pip"));
            }
            return self.pip(&pip.words[1..]);
        }
        if !self.has_tool(prog) {
            return self.not_found(prog);
        }
        match prog {
            "apt-get" | "apt" => self.apt(args),
            "apk" => self.apk(args),
            "yum" | "dnf" | "microdnf" => self.yum(prog, args),
            p if p.starts_with("python") => self.python(prog, args),
            "bash" | "sh" | "dash" => self.shell(prog, args),
            "make" | "gmake" => self.make(args),
            "cmake" => self.cmake(args),
            "autoreconf" | "autoconf" | "automake" | "aclocal" | "libtoolize" => self.autotools(prog),
            "npm" | "npx" | "yarn" => self.npm(prog, args),
            "node" => self.node(args),
            "cargo" => self.cargo(args),
            "mvn" => self.mvn(args),
            "java" => self.java(args),
            "Rscript" | "R" => self.r(prog, args),
            "julia" => self.julia(args),
            "conda" | "mamba" => self.conda(prog, args),
            "git" => self.git(args),
            "curl" | "wget" => self.download(prog, args),
            "gcc" | "g++" | "cc" | "c++" | "gfortran" | "clang" => self.compile_direct(prog, args),
            _ => {
                if self.phase == Phase::Validate {
                    self.say(format!("usage: {prog} [options]"));
                }
                self.duration += 0.5;
                Ok(())
            }
        }
    }

    // ---- shell-ish builtins ----

    fn cd(&mut self, args: &[String]) -> Step {
        let target = args.first().map(String::as_str).unwrap_or("/root");
        let p = self.abs(target);
        if !self.is_dir(&p) {
            return self.fail(2, format!("/bin/sh: 1: cd: can't cd to {target}"));
        }
        self.cwd = p;
        Ok(())
    }

    fn copy(&mut self, prog: &str, args: &[String]) -> Step {
        let pos: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
        if pos.len() < 2 {
            return Ok(());
        }
        let dst = self.abs(pos[pos.len() - 1]);
        for src in &pos[..pos.len() - 1] {
            let s = self.abs(src);
            if self.is_file(&s) {
                let target = if self.is_dir(&dst) { format!("{dst}/{}", basename(&s)) } else { dst.clone() };
                let f = self.img.files.get(&s).cloned().unwrap_or_default();
                if prog == "mv" {
                    self.img.files.remove(&s);
                }
                self.put(&target, f);
            } else if self.is_dir(&s) {
                let base = if self.is_dir(&dst) { format!("{dst}/{}", basename(&s)) } else { dst.clone() };
                for f in self.files_under(&s) {
                    let rel = f[s.len()..].to_string();
                    let file = self.img.files.get(&f).cloned().unwrap_or_default();
                    if prog == "mv" {
                        self.img.files.remove(&f);
                    }
                    self.put(&format!("{base}{rel}"), file);
                }
                self.img.dirs.insert(base);
            } else {
                return self.fail(1, format!("{prog}: cannot stat '{src}': No such file or directory"));
            }
        }
        Ok(())
    }

    fn chmod(&mut self, args: &[String]) -> Step {
        let pos: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
        let Some((mode, targets)) = pos.split_first() else { return Ok(()) };
        let exec = mode.contains('x') || mode.chars().all(|c| c.is_ascii_digit()) && mode.contains(['1', '3', '5', '7']);
        for t in targets {
            let p = self.abs(t);
            if let Some(f) = self.img.files.get_mut(&p) {
                f.exec = f.exec || exec;
                continue;
            }
            if !self.is_dir(&p) {
                return self.fail(1, format!("chmod: cannot access '{t}': No such file or directory"));
            }
        }
        Ok(())
    }

    fn exec_path(&mut self, prog: &str, args: &[String]) -> Step {
        let p = self.abs(prog);
        let Some(file) = self.img.files.get(&p).cloned() else {
            return match self.phase {
                Phase::Build => self.fail(127, format!("/bin/sh: 1: {prog}: not found")),
                Phase::Validate => self.fail(127, format!("exec: \"{prog}\": stat {prog}: no such file or directory")),
            };
        };
        if file.binary {
            self.duration += 0.5;
            if self.phase == Phase::Validate {
                self.say(format!("usage: {} [options]", basename(&p)));
            }
            return Ok(());
        }
        if !file.exec {
            return self.fail(126, format!("/bin/sh: 1: {prog}: Permission denied"));
        }
        let text = file.text.unwrap_or_default();
        let shebang = text.lines().next().unwrap_or("").to_string();
        if basename(&p) == "configure" {
            let dir = parent(&p);
            return self.configure(&dir);
        }
        if shebang.starts_with("#!") && shebang.contains("python") {
            let interp = if shebang.contains("python2") { "python2" } else { "python3" };
            if !self.has_tool(interp) && !self.has_tool("python") {
                return self.fail(127, format!("/usr/bin/env: '{interp}': No such file or directory"));
            }
            return self.python_file(interp, &p);
        }
        if shebang.starts_with("#!") && shebang.contains("node") {
            return self.node(&[p]);
        }
        if shebang.starts_with("#!") && shebang.contains("Rscript") {
            return self.r("Rscript", &[p]);
        }
        let _ = args;
        self.run_script("sh", &p, true)
    }

    fn shell(&mut self, prog: &str, args: &[String]) -> Step {
        let mut i = 0;
        while i < args.len() {
            let a = args[i].as_str();
            if a == "-c" {
                let Some(script) = args.get(i + 1) else { return Ok(()) };
                let saved = self.cwd.clone();
                let r = self.run_lines(script);
                self.cwd = saved;
                return r;
            }
            if a.starts_with('-') {
                i += 1;
                continue;
            }
            let p = self.abs(a);
            return self.run_script(prog, &p, true);
        }
        Ok(())
    }

    fn run_lines(&mut self, text: &str) -> Step {
        let joined = text.replace("\\\n", " ");
        let mut skipping_heredoc: Option<String> = None;
        for raw in joined.lines() {
            let line = raw.trim();
            if let Some(end) = &skipping_heredoc {
                if line == end {
                    skipping_heredoc = None;
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(i) = line.find("<<") {
                let end = line[i + 2..].trim().trim_start_matches('-').trim_matches(['\'', '"']).to_string();
                if !end.is_empty() {
                    skipping_heredoc = Some(end);
                }
            }
            let first = line.split_whitespace().next().unwrap_or("");
            if matches!(
                first,
                "if" | "then" | "else" | "elif" | "fi" | "for" | "do" | "done" | "while" | "until" | "case" | "esac"
                    | "function" | "{" | "}" | "return" | "local"
            ) || line.ends_with("() {")
                || line.ends_with(')') && !line.contains(' ')
            {
                continue;
            }
            if first == "exit" {
                let code = line.split_whitespace().nth(1).and_then(|c| c.parse::<i32>().ok()).unwrap_or(0);
                return if code == 0 { Ok(()) } else { Err(Fail { code }) };
            }
            self.run_line(line)?;
        }
        Ok(())
    }

    fn run_script(&mut self, prog: &str, abs: &str, isolated: bool) -> Step {
        let Some(text) = self.img.files.get(abs).map(|f| f.text.clone()) else {
            return self.fail(127, format!("{prog}: {abs}: No such file or directory"));
        };
        if self.depth >= MAX_SCRIPT_DEPTH {
            return Ok(());
        }
        let Some(text) = text else { return Ok(()) };
        self.depth += 1;
        let saved = self.cwd.clone();
        let r = self.run_lines(&text);
        if isolated {
            self.cwd = saved;
        }
        self.depth -= 1;
        r
    }

    // ---- package managers ----

    fn apt_mirror(&self) -> String {
        let host = if matches!(self.img.codename.as_str(), "precise" | "trusty" | "xenial" | "bionic" | "focal" | "jammy" | "noble") {
            "http://archive.ubuntu.com/ubuntu"
        } else {
            "http://deb.debian.org/debian"
        };
        format!("{host} {}", self.img.codename)
    }

    fn apt(&mut self, args: &[String]) -> Step {
        let pos: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
        let Some(sub) = pos.first().copied() else { return Ok(()) };
        match sub {
            "update" => {
                if !self.network() {
                    let m = self.apt_mirror();
                    return self.fail(
                        100,
                        format!("Err:1 {m} InRelease\n  Temporary failure resolving '{}'\nE: Failed to fetch lists", m.split('/').nth(2).unwrap_or("")),
                    );
                }
                self.duration += 8.0;
                let m = self.apt_mirror();
                if self.img.eol {
                    return self.fail(
                        100,
                        format!("Ign:1 {m} InRelease\nErr:2 {m} Release\n  404  Not Found\nE: The repository '{m} Release' does not have a Release file."),
                    );
                }
                self.say(format!("Get:1 {m} InRelease\nReading package lists..."));
                self.img.apt_updated = true;
                Ok(())
            }
            "install" => {
                let pkgs: Vec<String> = pos[1..]
                    .iter()
                    .map(|p| p.split('=').next().unwrap_or(p).to_string())
                    .collect();
                if !self.network() {
                    return self.fail(100, format!("E: Failed to fetch {}  Temporary failure resolving mirror", pkgs.join(" ")));
                }
                self.say("Reading package lists...\nBuilding dependency tree...");
                for p in &pkgs {
                    if !self.img.apt_updated || self.img.eol || !self.apt_effect(p) {
                        return self.fail(100, format!("E: Unable to locate package {p}"));
                    }
                }
                self.duration += 4.0 + 2.0 * pkgs.len() as f64;
                self.say(format!("Setting up {} ...", pkgs.join(" ")));
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn apk(&mut self, args: &[String]) -> Step {
        let pos: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
        if pos.first() != Some(&"add") {
            return Ok(());
        }
        if !self.network() {
            return self.fail(1, "ERROR: unable to select packages: temporary failure resolving dl-cdn.alpinelinux.org");
        }
        for p in &pos[1..] {
            let name = match *p {
                "py3-pip" => "python3-pip",
                "build-base" => "build-essential",
                other => other,
            };
            self.img.apt_updated = true;
            if !self.apt_effect(name) {
                return self.fail(1, format!("ERROR: unable to select packages:\n  {p} (no such package):"));
            }
        }
        self.duration += 3.0 + pos.len() as f64;
        Ok(())
    }

    fn yum(&mut self, prog: &str, args: &[String]) -> Step {
        let pos: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
        if pos.first() != Some(&"install") {
            return Ok(());
        }
        if self.img.eol {
            return self.fail(
                1,
                "Error: Failed to download metadata for repo 'appstream': Cannot prepare internal mirrorlist: No URLs in mirrorlist",
            );
        }
        if !self.network() {
            return self.fail(1, format!("{prog}: Curl error (6): Couldn't resolve host name"));
        }
        self.img.apt_updated = true;
        for p in &pos[1..] {
            let name = match *p {
                "python3-devel" => "python3-dev",
                "gcc-c++" => "g++",
                other => other,
            };
            if !self.apt_effect(name) {
                return self.fail(1, format!("Error: Unable to find a match: {p}"));
            }
        }
        Ok(())
    }

    fn add_python(&mut self) {
        if self.img.python.is_none() {
            self.img.python = Some(distro_python(&self.img.codename).to_string());
        }
        let v = self.img.python.clone().unwrap_or_default();
        self.install_tool("python3");
        self.install_tool(&format!("python{v}"));
    }

    /// Applies a system package; false when the package does not exist.
    fn apt_effect(&mut self, p: &str) -> bool {
        let tools: &[&str] = match p {
            "python3" | "python3-dev" | "python3-venv" | "python3-setuptools" => {
                self.add_python();
                &[]
            }
            "python3-pip" => {
                self.add_python();
                &["pip3", "pip"]
            }
            "python-is-python3" => {
                self.add_python();
                &["python"]
            }
            p if p.starts_with("python3-") => {
                self.add_python();
                self.img.python_dists.insert(normalize_dist(&p["python3-".len()..]));
                &[]
            }
            "build-essential" => &["gcc", "g++", "cc", "make"],
            "gcc" => &["gcc", "cc"],
            "g++" => &["g++"],
            "gfortran" => &["gfortran"],
            "make" => &["make"],
            "cmake" => &["cmake"],
            "git" => &["git"],
            "curl" => &["curl"],
            "wget" => &["wget"],
            "pkg-config" => &["pkg-config"],
            "autoconf" => &["autoconf", "autoreconf"],
            "automake" => &["automake", "aclocal"],
            "libtool" => &["libtoolize"],
            "nodejs" => &["node"],
            "npm" => &["npm", "npx", "node"],
            "r-base" | "r-base-core" => &["R", "Rscript"],
            "default-jdk" | "default-jre" | "maven" => {
                if p == "maven" {
                    self.install_tool("mvn");
                }
                &["java", "javac"]
            }
            p if p.starts_with("openjdk-") => &["java", "javac"],
            "cargo" => &["cargo", "rustc"],
            "rustc" => &["rustc"],
            "bash" => &["bash"],
            p if p.starts_with("lib") => &[],
            p if p.starts_with("r-cran-") => {
                self.img.r_packages.insert(p["r-cran-".len()..].to_string());
                &[]
            }
            p if MISC_APT.contains(&p) => &[],
            _ => return false,
        };
        for t in tools {
            self.install_tool(t);
        }
        self.img.system_packages.insert(p.to_string());
        true
    }

    fn python_eol(&self) -> bool {
        self.img.python.as_deref().is_some_and(|v| version_lt(v, 3, 8))
    }

    fn pip(&mut self, args: &[String]) -> Step {
        let Some(sub) = args.first() else { return Ok(()) };
        if sub != "install" {
            return Ok(());
        }
        const VALUED: &[&str] = &[
            "-c", "--constraint", "-i", "--index-url", "--extra-index-url", "-f", "--find-links", "-t", "--target",
            "--prefix", "--root", "--platform", "--python-version", "--only-binary", "--no-binary", "--progress-bar",
            "--cache-dir", "--src",
        ];
        let mut req_files = Vec::new();
        let mut targets = Vec::new();
        let mut i = 1;
        while i < args.len() {
            let a = args[i].as_str();
            if a == "-r" || a == "--requirement" {
                if let Some(v) = args.get(i + 1) {
                    req_files.push(v.clone());
                }
                i += 2;
                continue;
            }
            if let Some(v) = a.strip_prefix("--requirement=").or_else(|| a.strip_prefix("-r").filter(|v| !v.is_empty())) {
                req_files.push(v.to_string());
                i += 1;
                continue;
            }
            if a == "-e" || a == "--editable" {
                if let Some(v) = args.get(i + 1) {
                    targets.push(v.clone());
                }
                i += 2;
                continue;
            }
            if VALUED.contains(&a) {
                i += 2;
                continue;
            }
            if !a.starts_with('-') {
                targets.push(a.to_string());
            }
            i += 1;
        }
        if req_files.is_empty() && targets.is_empty() {
            return self.fail(1, "ERROR: You must give at least one requirement to install (see \"pip help install\")");
        }
        let mut packages: Vec<String> = Vec::new();
        let mut projects: Vec<String> = Vec::new();
        for f in &req_files {
            let p = self.abs(f);
            self.collect_requirements(f, &p, &mut packages, 0)?;
        }
        for t in &targets {
            let looks_local = t == "." || t.starts_with("./") || t.starts_with('/') || t.starts_with("../");
            let p = self.abs(t);
            if t.starts_with("git+") || t.contains("://") {
                if !self.network() {
                    return self.pip_offline(t);
                }
                continue;
            }
            if t.ends_with(".whl") || t.ends_with(".tar.gz") || t.ends_with(".zip") {
                if !self.is_file(&p) {
                    return self.fail(1, format!("ERROR: Could not install packages due to an OSError: [Errno 2] No such file or directory: '{p}'"));
                }
                continue;
            }
            if looks_local || (self.is_dir(&p) && !t.contains(['=', '<', '>'])) {
                if !(self.is_file(&format!("{p}/setup.py")) || self.is_file(&format!("{p}/pyproject.toml"))) {
                    if !self.is_dir(&p) {
                        return self.fail(1, format!("ERROR: Invalid requirement: '{t}'\nHint: It looks like a path. File '{t}' does not exist."));
                    }
                    return self.fail(
                        1,
                        format!("ERROR: Directory '{t}' is not installable. Neither 'setup.py' nor 'pyproject.toml' found."),
                    );
                }
                let proj = self.python_project(&p);
                packages.extend(proj.dependencies.iter().cloned());
                projects.push(p);
                continue;
            }
            match parse_requirements(t).packages.into_iter().next() {
                Some(n) => packages.push(n),
                None => return self.fail(1, format!("ERROR: Invalid requirement: '{t}'")),
            }
        }
        if !self.network() {
            if let Some(first) = packages.first().cloned() {
                return self.pip_offline(&first);
            }
        }
        for p in &packages {
            self.say(format!("Collecting {p}"));
            if (self.python_eol() && !matches!(p.as_str(), "pip" | "setuptools" | "wheel")) || python_unavailable(p) {
                return self.fail(
                    1,
                    format!("ERROR: Could not find a version that satisfies the requirement {p} (from versions: none)\nERROR: No matching distribution found for {p}"),
                );
            }
        }
        if self.python_eol() && !projects.is_empty() {
            return self.fail(1, "ERROR: Package requires a different Python: setuptools>=61 could not be installed\nERROR: Could not find a version that satisfies the requirement setuptools>=61 (from versions: none)");
        }
        for p in &packages {
            self.img.python_dists.insert(p.clone());
            self.install_tool(p);
        }
        for dir in projects {
            self.install_project(&dir);
        }
        self.duration += 3.0 + 4.0 * packages.len() as f64;
        if !packages.is_empty() {
            self.say(format!("Successfully installed {}", packages.join(" ")));
        }
        Ok(())
    }

    fn pip_offline(&mut self, what: &str) -> Step {
        self.fail(
            1,
            format!("WARNING: Retrying (Retry(total=4)) after connection broken by 'NewConnectionError(\"Failed to establish a new connection: [Errno -3] Temporary failure in name resolution\")'\nERROR: Could not find a version that satisfies the requirement {what}"),
        )
    }

    fn collect_requirements(&mut self, shown: &str, abs: &str, out: &mut Vec<String>, depth: u32) -> Step {
        let Some(text) = self.text(abs).map(str::to_string) else {
            return self.fail(
                1,
                format!("ERROR: Could not open requirements file: [Errno 2] No such file or directory: '{shown}'"),
            );
        };
        let req = parse_requirements(&text);
        out.extend(req.packages);
        if depth < 5 {
            let dir = parent(abs);
            for inc in req.includes {
                let p = normalize_path(&format!("{dir}/{inc}"));
                self.collect_requirements(&inc, &p, out, depth + 1)?;
            }
        }
        Ok(())
    }

    fn python_project(&self, dir: &str) -> crate::recipe::project::PythonProject {
        if let Some(t) = self.text(&format!("{dir}/pyproject.toml")) {
            let p = parse_pyproject(t);
            if p.name.is_some() || !p.scripts.is_empty() || !p.dependencies.is_empty() {
                return p;
            }
        }
        self.text(&format!("{dir}/setup.py")).map(parse_setup_py).unwrap_or_default()
    }

    /// Module file a console script runs, found from its `module:function` target.
    fn script_module(&self, dir: &str, script: &str) -> String {
        let texts = [
            self.text(&format!("{dir}/pyproject.toml")).unwrap_or(""),
            self.text(&format!("{dir}/setup.py")).unwrap_or(""),
            self.text(&format!("{dir}/setup.cfg")).unwrap_or(""),
        ];
        let re = Regex::new(&format!(r#"["']?{}["']?\s*=\s*["']?([A-Za-z0-9_.]+):"#, regex::escape(script))).expect("valid regex");
        for t in texts {
            if let Some(c) = re.captures(t) {
                let module = c[1].replace('.', "/");
                for base in [dir.to_string(), format!("{dir}/src")] {
                    for cand in [format!("{base}/{module}.py"), format!("{base}/{module}/__init__.py")] {
                        if self.is_file(&cand) {
                            return cand;
                        }
                    }
                }
            }
        }
        String::new()
    }

    fn install_project(&mut self, dir: &str) {
        let proj = self.python_project(dir);
        if let Some(n) = &proj.name {
            self.img.python_dists.insert(normalize_dist(n));
        }
        // Top-level packages become importable from anywhere.
        for base in [dir.to_string(), format!("{dir}/src")] {
            for f in self.files_under(&base) {
                let rel = &f[base.len() + 1..];
                if let Some(pkg) = rel.strip_suffix("/__init__.py").filter(|p| !p.contains('/')) {
                    self.img.python_dists.insert(normalize_dist(pkg));
                }
            }
        }
        for s in &proj.scripts {
            let module = self.script_module(dir, s);
            self.img.console_scripts.insert(s.clone(), module);
        }
    }

    // ---- python ----

    fn python(&mut self, prog: &str, args: &[String]) -> Step {
        let mut i = 0;
        while i < args.len() {
            let a = args[i].as_str();
            match a {
                "-m" => {
                    let Some(module) = args.get(i + 1) else { return Ok(()) };
                    return self.python_module(prog, module, &args[i + 2..]);
                }
                "-c" => {
                    let code = args.get(i + 1).cloned().unwrap_or_default();
                    let cwd = self.cwd.clone();
                    return self.check_python_source(prog, "<string>", &code, &[cwd], &mut BTreeSet::new(), 0);
                }
                "-V" | "--version" => {
                    let v = self.img.python.clone().unwrap_or_default();
                    self.say(format!("Python {v}"));
                    return Ok(());
                }
                "-W" | "-X" => i += 2,
                _ if a.starts_with('-') => i += 1,
                _ => {
                    let p = self.abs(a);
                    if basename(&p) == "setup.py" {
                        let sub = args.get(i + 1).map(String::as_str).unwrap_or("");
                        if !self.is_file(&p) {
                            return self.fail(2, format!("{prog}: can't open file '{p}': [Errno 2] No such file or directory"));
                        }
                        if matches!(sub, "install" | "develop") {
                            let dir = parent(&p);
                            let proj = self.python_project(&dir);
                            if self.python_eol() && !proj.dependencies.is_empty() {
                                let d = proj.dependencies[0].clone();
                                return self.fail(1, format!("error: Could not find suitable distribution for Requirement.parse('{d}')\nNo matching distribution found for {d}"));
                            }
                            for d in &proj.dependencies {
                                self.img.python_dists.insert(d.clone());
                            }
                            self.install_project(&dir);
                        }
                        self.duration += 10.0;
                        return Ok(());
                    }
                    return self.python_file(prog, &p);
                }
            }
        }
        Ok(())
    }

    fn python_module(&mut self, prog: &str, module: &str, rest: &[String]) -> Step {
        match module {
            "venv" | "virtualenv" => {
                if let Some(d) = rest.iter().find(|a| !a.starts_with('-')) {
                    let p = self.abs(d);
                    self.img.dirs.insert(p);
                }
                return Ok(());
            }
            "pytest" if !self.img.python_dists.contains("pytest") => {
                return self.fail(1, format!("/usr/local/bin/{prog}: No module named pytest"));
            }
            "pytest" | "unittest" | "compileall" | "http.server" | "json.tool" => return Ok(()),
            _ => {}
        }
        let path = module.replace('.', "/");
        let dirs = [self.cwd.clone(), format!("{}/src", self.cwd), self.img.workdir.clone()];
        for d in &dirs {
            for cand in [format!("{d}/{path}/__main__.py"), format!("{d}/{path}.py")] {
                if self.is_file(&cand) {
                    return self.python_file(prog, &cand);
                }
            }
        }
        let top = module.split('.').next().unwrap_or(module);
        if is_python_stdlib(top) || self.dist_installed(top) {
            self.duration += 1.0;
            if self.phase == Phase::Validate {
                self.say(format!("usage: {prog} -m {module} [options]"));
            }
            return Ok(());
        }
        self.fail(1, format!("/usr/local/bin/{prog}: No module named {module}"))
    }

    fn dist_installed(&self, import: &str) -> bool {
        let d = dist_for_import(import);
        self.img.python_dists.contains(&d) || self.img.python_dists.contains(&normalize_dist(import))
    }

    fn python_file(&mut self, prog: &str, abs: &str) -> Step {
        let Some(text) = self.img.files.get(abs).map(|f| f.text.clone().unwrap_or_default()) else {
            return self.fail(2, format!("{prog}: can't open file '{abs}': [Errno 2] No such file or directory"));
        };
        let dirs = vec![parent(abs), self.cwd.clone(), self.img.workdir.clone()];
        let mut seen = BTreeSet::new();
        self.check_python_source(prog, abs, &text, &dirs, &mut seen, 0)?;
        self.duration += 1.0;
        if self.phase == Phase::Validate {
            if ["urlopen(", "urlretrieve(", "requests.get(", "requests.post(", "socket.create_connection("]
                .iter()
                .any(|m| text.contains(m))
            {
                return self.fail(
                    1,
                    format!("Traceback (most recent call last):\n  File \"{abs}\", line 1, in <module>\nurllib.error.URLError: <urlopen error [Errno -3] Temporary failure in name resolution>"),
                );
            }
            self.say(format!("usage: {} [-h] [options]", basename(abs)));
        }
        Ok(())
    }

    fn local_module(&self, module: &str, dirs: &[String]) -> Option<String> {
        for d in dirs {
            for cand in [
                format!("{d}/{module}.py"),
                format!("{d}/{module}/__init__.py"),
                format!("{d}/src/{module}/__init__.py"),
            ] {
                if self.is_file(&cand) {
                    return Some(cand);
                }
            }
            if self.is_dir(&format!("{d}/{module}")) {
                return Some(String::new());
            }
        }
        None
    }

    fn check_python_source(
        &mut self,
        prog: &str,
        path: &str,
        text: &str,
        dirs: &[String],
        seen: &mut BTreeSet<String>,
        depth: u32,
    ) -> Step {
        if !seen.insert(path.to_string()) {
            return Ok(());
        }
        let py2 = self.img.python.as_deref().is_some_and(|v| v.starts_with('2'));
        if !py2 && text.lines().any(|l| {
            let t = l.trim_start();
            t.starts_with("print ") && !t.starts_with("print (")
        }) {
            return self.fail(
                1,
                format!("  File \"{path}\", line 1\nSyntaxError: Missing parentheses in call to 'print'. Did you mean print(...)?"),
            );
        }
        for m in python_imports(text) {
            if is_python_stdlib(&m) {
                continue;
            }
            if let Some(local) = self.local_module(&m, dirs) {
                if depth < 3 && !local.is_empty() {
                    let t = self.text(&local).unwrap_or("").to_string();
                    let mut d = vec![parent(&local)];
                    d.extend(dirs.iter().cloned());
                    self.check_python_source(prog, &local, &t, &d, seen, depth + 1)?;
                }
                continue;
            }
            if self.dist_installed(&m) {
                continue;
            }
            let line = text
                .lines()
                .position(|l| l.contains("import") && l.contains(m.as_str()))
                .map_or(1, |i| i + 1);
            let err = if py2 {
                format!("ImportError: No module named {m}")
            } else {
                format!("ModuleNotFoundError: No module named '{m}'")
            };
            return self.fail(
                1,
                format!("Traceback (most recent call last):\n  File \"{path}\", line {line}, in <module>\n{err}"),
            );
        }
        Ok(())
    }

    // ---- native builds ----

    fn compiler_for(path: &str) -> Option<&'static str> {
        let ext = path.rsplit('.').next().unwrap_or("");
        match ext {
            "c" => Some("gcc"),
            "cc" | "cpp" | "cxx" | "C" => Some("g++"),
            "f" | "f90" | "f95" | "F90" | "F" => Some("gfortran"),
            _ => None,
        }
    }

    /// Compiles every source under `src_dir`; checks compilers, `#error`
    /// directives and headers.
    fn compile_tree(&mut self, src_dir: &str, skip_dir: Option<&str>, driver: &str) -> Step {
        let sources: Vec<String> = self
            .files_under(src_dir)
            .into_iter()
            .filter(|f| skip_dir.map_or(true, |s| !f.starts_with(&format!("{s}/"))))
            .filter(|f| Self::compiler_for(f).is_some())
            .collect();
        for s in sources {
            self.compile_one(&s, src_dir, driver)?;
        }
        Ok(())
    }

    fn compile_one(&mut self, src: &str, root: &str, driver: &str) -> Step {
        static INCLUDE: OnceLock<Regex> = OnceLock::new();
        let include = INCLUDE.get_or_init(|| Regex::new(r#"^\s*#\s*include\s*([<"])([^>"]+)[>"]"#).unwrap());
        let Some(cc) = Self::compiler_for(src) else { return Ok(()) };
        let rel = src.strip_prefix(&format!("{root}/")).unwrap_or(src).to_string();
        let has_cc = self.has_tool(cc) || (cc == "gcc" && self.has_tool("cc"));
        if !has_cc {
            return self.fail(
                127,
                format!("{driver}: {cc}: No such file or directory\n{driver}: *** [Makefile:2: {rel}.o] Error 127"),
            );
        }
        let text = self.text(src).unwrap_or("").to_string();
        self.duration += 3.0;
        for (i, line) in text.lines().enumerate() {
            let t = line.trim_start();
            if let Some(msg) = t.strip_prefix("#error") {
                return self.fail(
                    1,
                    format!("{rel}:{}:2: error: #error{msg}\n{driver}: *** [Makefile:2: {rel}.o] Error 1", i + 1),
                );
            }
            if let Some(c) = include.captures(line) {
                let header = &c[2];
                let system = &c[1] == "<";
                if let Some((_, pkg)) = SYSTEM_HEADERS.iter().find(|(h, _)| *h == header) {
                    if !pkg.is_empty() && !self.img.system_packages.contains(*pkg) {
                        return self.fail(
                            1,
                            format!("{rel}:{}:10: fatal error: {header}: No such file or directory\ncompilation terminated.\n{driver}: *** [Makefile:2: {rel}.o] Error 1", i + 1),
                        );
                    }
                    continue;
                }
                if system {
                    continue;
                }
                let dir = parent(src);
                let found = [dir.as_str(), root, &format!("{root}/include"), &format!("{root}/src")]
                    .iter()
                    .any(|d| self.is_file(&normalize_path(&format!("{d}/{header}"))));
                if !found {
                    return self.fail(
                        1,
                        format!("{rel}:{}:10: fatal error: {header}: No such file or directory\ncompilation terminated.", i + 1),
                    );
                }
            }
        }
        self.say(format!("{cc} -O2 -c {rel}"));
        Ok(())
    }

    fn generated_header(text: &str, key: &str) -> Option<String> {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("# {key}: ")))
            .map(str::to_string)
    }

    fn make(&mut self, args: &[String]) -> Step {
        let dir = match args.iter().position(|a| a == "-C") {
            Some(i) => self.abs(args.get(i + 1).map(String::as_str).unwrap_or(".")),
            None => self.cwd.clone(),
        };
        let explicit = args
            .iter()
            .position(|a| a == "-f")
            .and_then(|i| args.get(i + 1))
            .map(|f| normalize_path(&format!("{dir}/{f}")));
        let makefile = match explicit {
            Some(f) => Some(f).filter(|f| self.is_file(f)),
            None => ["Makefile", "makefile", "GNUmakefile"]
                .iter()
                .map(|n| format!("{dir}/{n}"))
                .find(|f| self.is_file(f)),
        };
        let Some(makefile) = makefile else {
            return self.fail(2, "make: *** No targets specified and no makefile found.  Stop.");
        };
        let text = self.text(&makefile).unwrap_or("").to_string();
        let mut skip_next = false;
        let targets: Vec<&str> = args
            .iter()
            .filter(|a| {
                if skip_next {
                    skip_next = false;
                    return false;
                }
                if matches!(a.as_str(), "-C" | "-f" | "-j" | "-l") {
                    skip_next = a.as_str() != "-j";
                    return false;
                }
                !a.starts_with('-') && !a.contains('=') && a.parse::<u32>().is_err()
            })
            .map(String::as_str)
            .collect();
        let (programs, source, out_dir, skip) = if text.starts_with(GENERATED) {
            let source = Self::generated_header(&text, "source").unwrap_or_else(|| dir.clone());
            let progs: Vec<String> = Self::generated_header(&text, "programs")
                .map(|p| p.split_whitespace().map(str::to_string).collect())
                .unwrap_or_default();
            let skip = (source != dir).then(|| dir.clone());
            (progs, source, dir.clone(), skip)
        } else {
            (make_programs(&text), dir.clone(), dir.clone(), None)
        };
        let build_targets: Vec<&str> = if targets.is_empty() { vec!["all"] } else { targets };
        for t in build_targets {
            match t {
                "clean" | "distclean" | "test" | "check" | "tests" | "doc" | "docs" => {}
                "all" | "default" | "build" | "install" => {
                    self.compile_tree(&source, skip.as_deref(), "make")?;
                    for p in &programs {
                        self.produce_binary(&format!("{out_dir}/{p}"));
                    }
                    if t == "install" {
                        for p in &programs {
                            self.produce_binary(&format!("/usr/local/bin/{p}"));
                        }
                    }
                }
                other => {
                    let known = programs.iter().any(|p| p == other)
                        || text.lines().any(|l| l.starts_with(&format!("{other}:")));
                    if !known {
                        return self.fail(2, format!("make: *** No rule to make target '{other}'.  Stop."));
                    }
                    self.compile_tree(&source, skip.as_deref(), "make")?;
                    self.produce_binary(&format!("{out_dir}/{other}"));
                }
            }
        }
        self.duration += 2.0;
        Ok(())
    }

    fn cmake(&mut self, args: &[String]) -> Step {
        if let Some(i) = args.iter().position(|a| a == "--build") {
            let build = self.abs(args.get(i + 1).map(String::as_str).unwrap_or("."));
            let cache = format!("{build}/CMakeCache.txt");
            let Some(text) = self.text(&cache).map(str::to_string) else {
                return self.fail(1, format!("Error: could not load cache\nError: {build} is not a directory or not configured"));
            };
            let source = Self::generated_header(&text, "source").unwrap_or_default();
            let programs: Vec<String> = Self::generated_header(&text, "programs")
                .map(|p| p.split_whitespace().map(str::to_string).collect())
                .unwrap_or_default();
            self.compile_tree(&source, Some(&build), "gmake[2]")?;
            for p in &programs {
                self.produce_binary(&format!("{build}/{p}"));
            }
            self.duration += 2.0;
            return Ok(());
        }
        if let Some(i) = args.iter().position(|a| a == "--install") {
            let build = self.abs(args.get(i + 1).map(String::as_str).unwrap_or("."));
            let bins: Vec<String> = self
                .files_under(&build)
                .into_iter()
                .filter(|f| self.img.files.get(f).is_some_and(|x| x.binary))
                .collect();
            for b in bins {
                self.produce_binary(&format!("/usr/local/bin/{}", basename(&b)));
            }
            return Ok(());
        }
        if args.first().is_some_and(|a| a == "-E") {
            return Ok(());
        }
        let mut source = None;
        let mut build = None;
        let mut i = 0;
        while i < args.len() {
            let a = args[i].as_str();
            match a {
                "-S" => {
                    source = args.get(i + 1).cloned();
                    i += 2;
                }
                "-B" => {
                    build = args.get(i + 1).cloned();
                    i += 2;
                }
                "-G" | "-T" | "-A" | "-C" => i += 2,
                _ if a.starts_with("-S") && a.len() > 2 => {
                    source = Some(a[2..].to_string());
                    i += 1;
                }
                _ if a.starts_with("-B") && a.len() > 2 => {
                    build = Some(a[2..].to_string());
                    i += 1;
                }
                _ if a.starts_with('-') => i += 1,
                _ => {
                    source.get_or_insert_with(|| a.to_string());
                    i += 1;
                }
            }
        }
        let source = self.abs(source.as_deref().unwrap_or("."));
        let build = self.abs(build.as_deref().unwrap_or("."));
        let lists = format!("{source}/CMakeLists.txt");
        let Some(text) = self.text(&lists).map(str::to_string) else {
            return self.fail(
                1,
                format!("CMake Error: The source directory \"{source}\" does not appear to contain CMakeLists.txt."),
            );
        };
        if !(self.has_tool("gcc") || self.has_tool("cc")) {
            return self.fail(
                1,
                "CMake Error at CMakeLists.txt:2 (project):\n  No CMAKE_C_COMPILER could be found.\n-- Configuring incomplete, errors occurred!",
            );
        }
        static FIND: OnceLock<Regex> = OnceLock::new();
        let find = FIND.get_or_init(|| Regex::new(r"(?i)find_package\s*\(\s*([A-Za-z0-9_]+)([^)]*)\)").unwrap());
        let mut programs = Vec::new();
        for f in self.files_under(&source) {
            if basename(&f) != "CMakeLists.txt" || f.starts_with(&format!("{build}/")) {
                continue;
            }
            let t = self.text(&f).unwrap_or("").to_string();
            for c in find.captures_iter(&t) {
                if !c[2].to_ascii_uppercase().contains("REQUIRED") {
                    continue;
                }
                let name = c[1].to_ascii_lowercase();
                if let Some((_, pkg)) = CMAKE_PACKAGES.iter().find(|(n, _)| *n == name) {
                    if !self.img.system_packages.contains(*pkg) {
                        let line = t.lines().position(|l| l.contains(&c[0])).map_or(1, |i| i + 1);
                        let upper = c[1].to_ascii_uppercase();
                        return self.fail(
                            1,
                            format!("CMake Error at CMakeLists.txt:{line} (find_package):\n  Could NOT find {} (missing: {upper}_INCLUDE_DIR {upper}_LIBRARY)\n-- Configuring incomplete, errors occurred!", &c[1]),
                        );
                    }
                }
            }
            programs.extend(cmake_executables(&t));
        }
        let _ = text;
        let header = format!("{GENERATED}\n# source: {source}\n# programs: {}\n", programs.join(" "));
        self.put(&format!("{build}/CMakeCache.txt"), SimFile { text: Some(header.clone()), ..Default::default() });
        self.put(&format!("{build}/Makefile"), SimFile { text: Some(header), ..Default::default() });
        self.img.dirs.insert(build);
        self.say("-- Configuring done\n-- Generating done");
        self.duration += 6.0;
        Ok(())
    }

    fn autotools(&mut self, prog: &str) -> Step {
        let dir = self.cwd.clone();
        let ac = ["configure.ac", "configure.in"].iter().any(|f| self.is_file(&format!("{dir}/{f}")));
        if !ac {
            return self.fail(1, format!("{prog}: error: 'configure.ac' or 'configure.in' is required"));
        }
        if matches!(prog, "autoreconf" | "autoconf") {
            let text = format!("#!/bin/sh\n{GENERATED} configure\n");
            self.put(&format!("{dir}/configure"), SimFile { text: Some(text), exec: true, binary: false });
        }
        if matches!(prog, "autoreconf" | "automake") && self.is_file(&format!("{dir}/Makefile.am")) {
            self.put(&format!("{dir}/Makefile.in"), SimFile { text: Some(format!("{GENERATED}\n")), ..Default::default() });
        }
        self.duration += 5.0;
        Ok(())
    }

    fn configure(&mut self, dir: &str) -> Step {
        if !(self.has_tool("gcc") || self.has_tool("cc")) {
            return self.fail(
                1,
                "checking for gcc... no\nchecking for cc... no\nconfigure: error: in `/app':\nconfigure: error: no acceptable C compiler found in $PATH",
            );
        }
        let programs = if let Some(am) = self.text(&format!("{dir}/Makefile.am")) {
            automake_programs(am)
        } else if let Some(mi) = self.text(&format!("{dir}/Makefile.in")) {
            make_programs(mi)
        } else {
            return self.fail(1, "config.status: error: cannot find input file: `Makefile.in'");
        };
        let header = format!("{GENERATED}\n# source: {dir}\n# programs: {}\n", programs.join(" "));
        self.put(&format!("{dir}/Makefile"), SimFile { text: Some(header), ..Default::default() });
        self.say("checking for gcc... gcc\nconfigure: creating ./config.status\nconfig.status: creating Makefile");
        self.duration += 8.0;
        Ok(())
    }

    fn compile_direct(&mut self, prog: &str, args: &[String]) -> Step {
        let out = args
            .iter()
            .position(|a| a == "-o")
            .and_then(|i| args.get(i + 1))
            .cloned()
            .unwrap_or_else(|| "a.out".into());
        let mut skip = false;
        for a in args {
            if skip {
                skip = false;
                continue;
            }
            if matches!(a.as_str(), "-o" | "-I" | "-L" | "-include") {
                skip = true;
                continue;
            }
            if a.starts_with('-') || Self::compiler_for(a).is_none() {
                continue;
            }
            let p = self.abs(a);
            if !self.is_file(&p) {
                return self.fail(1, format!("{prog}: error: {a}: No such file or directory\ncompilation terminated."));
            }
            let root = self.cwd.clone();
            self.compile_one(&p, &root, prog)?;
        }
        let o = self.abs(&out);
        self.produce_binary(&o);
        Ok(())
    }

    // ---- other ecosystems ----

    fn npm(&mut self, prog: &str, args: &[String]) -> Step {
        let pos: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
        let global = args.iter().any(|a| a == "-g" || a == "--global");
        let sub = pos.first().copied().unwrap_or(if prog == "yarn" { "install" } else { "" });
        let pkg_json = format!("{}/package.json", self.cwd);
        match sub {
            "install" | "i" | "ci" | "add" => {
                if !self.network() {
                    return self.fail(
                        1,
                        "npm ERR! code EAI_AGAIN\nnpm ERR! request to https://registry.npmjs.org/ failed, reason: getaddrinfo EAI_AGAIN registry.npmjs.org",
                    );
                }
                let named: Vec<&str> = pos.iter().skip(1).copied().collect();
                if named.is_empty() || named == ["."] {
                    let Some(text) = self.text(&pkg_json).map(str::to_string) else {
                        return self.fail(
                            254,
                            format!("npm ERR! code ENOENT\nnpm ERR! syscall open\nnpm ERR! path {pkg_json}\nnpm ERR! enoent Could not read package.json: Error: ENOENT: no such file or directory, open '{pkg_json}'"),
                        );
                    };
                    let pkg = parse_package_json(&text);
                    for d in &pkg.dependencies {
                        let p = format!("{}/node_modules/{d}/package.json", self.cwd);
                        self.put(&p, SimFile::default());
                    }
                    if global || named == ["."] {
                        for (b, _) in &pkg.bins {
                            self.produce_binary(&format!("/usr/local/bin/{b}"));
                        }
                    }
                    self.duration += 15.0 + 2.0 * pkg.dependencies.len() as f64;
                } else {
                    for n in named {
                        if global {
                            self.produce_binary(&format!("/usr/local/bin/{n}"));
                        } else {
                            let p = format!("{}/node_modules/{n}/package.json", self.cwd);
                            self.put(&p, SimFile::default());
                        }
                    }
                    self.duration += 10.0;
                }
                Ok(())
            }
            "link" => {
                let pkg = self.text(&pkg_json).map(parse_package_json).unwrap_or_default();
                for (b, _) in &pkg.bins {
                    self.produce_binary(&format!("/usr/local/bin/{b}"));
                }
                Ok(())
            }
            "run" | "test" | "build" | "start" => {
                if !self.is_file(&pkg_json) {
                    return self.fail(254, format!("npm ERR! enoent Could not read package.json: Error: ENOENT: no such file or directory, open '{pkg_json}'"));
                }
                self.duration += 5.0;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn node(&mut self, args: &[String]) -> Step {
        let Some(file) = args.iter().find(|a| !a.starts_with('-')) else { return Ok(()) };
        let mut p = self.abs(file);
        if !self.is_file(&p) && self.is_file(&format!("{p}.js")) {
            p = format!("{p}.js");
        }
        let Some(text) = self.img.files.get(&p).map(|f| f.text.clone().unwrap_or_default()) else {
            return self.fail(1, format!("node:internal/modules/cjs/loader:1080\n  throw err;\n  ^\n\nError: Cannot find module '{p}'"));
        };
        static REQ: OnceLock<Regex> = OnceLock::new();
        let req = REQ.get_or_init(|| Regex::new(r#"(?:require\(\s*|from\s+)['"]([^'"]+)['"]"#).unwrap());
        let roots = [parent(&p), self.cwd.clone(), self.img.workdir.clone()];
        for c in req.captures_iter(&text) {
            let m = &c[1];
            if m.starts_with('.') || m.starts_with('/') {
                continue;
            }
            let name = m.strip_prefix("node:").unwrap_or(m);
            let top = if name.starts_with('@') {
                name.splitn(3, '/').take(2).collect::<Vec<_>>().join("/")
            } else {
                name.split('/').next().unwrap_or(name).to_string()
            };
            if NODE_BUILTINS.contains(&top.as_str()) {
                continue;
            }
            let found = roots.iter().any(|r| self.is_dir(&format!("{r}/node_modules/{top}")));
            if !found {
                return self.fail(1, format!("node:internal/modules/cjs/loader:1080\nError: Cannot find module '{top}'\nRequire stack:\n- {p}"));
            }
        }
        if self.phase == Phase::Validate {
            if ["https.get(", "http.get(", "fetch("].iter().any(|m| text.contains(m)) {
                return self.fail(1, "Error: getaddrinfo ENOTFOUND example.org");
            }
            self.say(format!("Usage: {} [options]", basename(&p)));
        }
        self.duration += 0.5;
        Ok(())
    }

    fn cargo(&mut self, args: &[String]) -> Step {
        let pos: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
        let sub = pos.first().copied().unwrap_or("");
        if !matches!(sub, "build" | "install" | "test" | "run") {
            return Ok(());
        }
        let dir = if let Some(p) = args.iter().position(|a| a == "--path").and_then(|i| args.get(i + 1)) {
            self.abs(p)
        } else if let Some(m) = args.iter().position(|a| a == "--manifest-path").and_then(|i| args.get(i + 1)) {
            parent(&self.abs(m))
        } else {
            self.cwd.clone()
        };
        let manifest = format!("{dir}/Cargo.toml");
        let Some(text) = self.text(&manifest).map(str::to_string) else {
            return self.fail(101, format!("error: could not find `Cargo.toml` in `{dir}` or any parent directory"));
        };
        if !self.network() {
            return self.fail(101, "error: failed to get dependencies\nCaused by:\n  Could not resolve host: index.crates.io");
        }
        let sources: Vec<String> = self.files_under(&dir).into_iter().filter(|f| f.ends_with(".rs")).collect();
        for s in &sources {
            let t = self.text(s).unwrap_or("").to_string();
            if let Some((i, line)) = t.lines().enumerate().find(|(_, l)| l.contains("compile_error!(")) {
                let name = basename(&dir).to_string();
                let rel = s.strip_prefix(&format!("{dir}/")).unwrap_or(s);
                return self.fail(
                    101,
                    format!("error: {}\n --> {rel}:{}:1\nerror: could not compile `{name}` due to 1 previous error", line.trim(), i + 1),
                );
            }
        }
        let profile = if args.iter().any(|a| a == "--release") || sub == "install" { "release" } else { "debug" };
        for b in cargo_binaries(&text) {
            self.produce_binary(&format!("{dir}/target/{profile}/{b}"));
            if sub == "install" {
                self.produce_binary(&format!("/usr/local/bin/{b}"));
            }
        }
        self.duration += 40.0 + 5.0 * sources.len() as f64;
        Ok(())
    }

    fn mvn(&mut self, args: &[String]) -> Step {
        let pom = match args.iter().position(|a| a == "-f").and_then(|i| args.get(i + 1)) {
            Some(f) => self.abs(f),
            None => format!("{}/pom.xml", self.cwd),
        };
        let Some(text) = self.text(&pom).map(str::to_string) else {
            return self.fail(
                1,
                format!("[ERROR] The goal you specified requires a project to execute but there is no POM in this directory ({}).\n[INFO] BUILD FAILURE", self.cwd),
            );
        };
        if !self.network() {
            return self.fail(1, "[ERROR] Failed to execute goal: Could not transfer artifact: repo.maven.apache.org: Temporary failure in name resolution");
        }
        if args.iter().any(|a| matches!(a.as_str(), "package" | "install" | "verify")) {
            if let Some(jar) = maven_jar(&text) {
                let p = normalize_path(&format!("{}/{jar}", parent(&pom)));
                self.produce_binary(&p);
            }
        }
        self.duration += 45.0;
        Ok(())
    }

    fn java(&mut self, args: &[String]) -> Step {
        if let Some(jar) = args.iter().position(|a| a == "-jar").and_then(|i| args.get(i + 1)) {
            let p = self.abs(jar);
            if !self.is_file(&p) {
                return self.fail(1, format!("Error: Unable to access jarfile {jar}"));
            }
        }
        if self.phase == Phase::Validate {
            self.say("Usage: java [options]");
        }
        Ok(())
    }

    fn r(&mut self, prog: &str, args: &[String]) -> Step {
        static INSTALL: OnceLock<Regex> = OnceLock::new();
        static LIB: OnceLock<Regex> = OnceLock::new();
        let install = INSTALL.get_or_init(|| Regex::new(r#"install\.packages\(\s*(c\(([^)]*)\)|['"]([^'"]+)['"])"#).unwrap());
        let lib = LIB.get_or_init(|| Regex::new(r#"(?:library|require)\(\s*['"]?([A-Za-z0-9.]+)['"]?\s*\)"#).unwrap());
        if let Some(i) = args.iter().position(|a| a == "-e") {
            let expr = args.get(i + 1).cloned().unwrap_or_default();
            if let Some(c) = install.captures(&expr) {
                if !self.network() {
                    return self.fail(1, "Warning: unable to access index for repository https://cloud.r-project.org/src/contrib:\n  cannot open URL");
                }
                let list = c.get(2).or(c.get(3)).map(|m| m.as_str()).unwrap_or("");
                for p in list.split(',') {
                    let p = p.trim().trim_matches(['"', '\'']);
                    if !p.is_empty() {
                        self.img.r_packages.insert(p.to_string());
                    }
                }
                self.duration += 30.0;
            }
            return Ok(());
        }
        if prog == "R" {
            if args.iter().any(|a| a == "INSTALL") {
                let dir = args.iter().rev().find(|a| !a.starts_with('-')).map(|d| self.abs(d)).unwrap_or_default();
                if let Some(desc) = self.text(&format!("{dir}/DESCRIPTION")) {
                    if let Some(n) = desc.lines().find_map(|l| l.strip_prefix("Package:")) {
                        let n = n.trim().to_string();
                        self.img.r_packages.insert(n);
                    }
                }
            }
            return Ok(());
        }
        let Some(file) = args.iter().find(|a| !a.starts_with('-')) else { return Ok(()) };
        let p = self.abs(file);
        let Some(text) = self.text(&p).map(str::to_string) else {
            return self.fail(2, format!("Fatal error: cannot open file '{file}': No such file or directory"));
        };
        for c in lib.captures_iter(&text) {
            let pkg = &c[1];
            if !R_BASE.contains(&pkg) && !self.img.r_packages.contains(pkg) {
                return self.fail(1, format!("Error in library({pkg}) : there is no package called '{pkg}'\nExecution halted"));
            }
        }
        if self.phase == Phase::Validate {
            self.say(format!("Usage: {} [options]", basename(&p)));
        }
        Ok(())
    }

    fn julia(&mut self, args: &[String]) -> Step {
        if args.iter().any(|a| a == "-e") {
            if !self.network() && args.iter().any(|a| a.contains("Pkg.add")) {
                return self.fail(1, "ERROR: could not download https://pkg.julialang.org/registries");
            }
            return Ok(());
        }
        let Some(file) = args.iter().find(|a| !a.starts_with('-')) else { return Ok(()) };
        let p = self.abs(file);
        if !self.is_file(&p) {
            return self.fail(1, format!("ERROR: SystemError: opening file \"{p}\": No such file or directory"));
        }
        Ok(())
    }

    fn conda(&mut self, prog: &str, args: &[String]) -> Step {
        let pos: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
        let installs = pos.first().is_some_and(|s| matches!(*s, "install" | "create" | "env" | "update"));
        if !installs {
            return Ok(());
        }
        if let Some(f) = args.iter().position(|a| a == "-f" || a == "--file").and_then(|i| args.get(i + 1)) {
            let p = self.abs(f);
            if !self.is_file(&p) {
                return self.fail(1, format!("EnvironmentFileNotFound: '{p}' file not found"));
            }
        }
        if !self.network() {
            return self.fail(1, format!("CondaHTTPError: HTTP 000 CONNECTION FAILED for url <https://conda.anaconda.org>\n{prog}: could not resolve host"));
        }
        for p in pos.iter().skip(1) {
            self.img.python_dists.insert(normalize_dist(p.split('=').next().unwrap_or(p)));
        }
        self.duration += 60.0;
        Ok(())
    }

    fn git(&mut self, args: &[String]) -> Step {
        let pos: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
        if pos.first() != Some(&"clone") {
            return Ok(());
        }
        let Some(url) = pos.get(1) else { return Ok(()) };
        if !self.network() {
            return self.fail(128, format!("fatal: unable to access '{url}/': Could not resolve host: github.com"));
        }
        let name = pos
            .get(2)
            .map(|s| s.to_string())
            .unwrap_or_else(|| basename(url.trim_end_matches('/')).trim_end_matches(".git").to_string());
        let d = self.abs(&name);
        self.put(&format!("{d}/.cloned"), SimFile::default());
        self.duration += 5.0;
        Ok(())
    }

    fn download(&mut self, prog: &str, args: &[String]) -> Step {
        let url = args.iter().find(|a| a.contains("://")).cloned().unwrap_or_default();
        if !self.network() {
            let host = url.split('/').nth(2).unwrap_or("example.org").to_string();
            return if prog == "curl" {
                self.fail(6, format!("curl: (6) Could not resolve host: {host}"))
            } else {
                self.fail(4, format!("wget: unable to resolve host address '{host}'"))
            };
        }
        let out = args
            .iter()
            .position(|a| a == "-o" || a == "-O" && prog == "wget")
            .and_then(|i| args.get(i + 1))
            .cloned()
            .or_else(|| (prog == "wget" || args.iter().any(|a| a == "-O")).then(|| basename(&url).to_string()));
        if let Some(o) = out.filter(|o| !o.is_empty() && o != "-") {
            let p = self.abs(&o);
            self.put(&p, SimFile::default());
        }
        self.duration += 2.0;
        Ok(())
    }
}

/// Programs a plain Makefile builds by default.
fn make_programs(text: &str) -> Vec<String> {
    let Some(target) = make_default_target(text) else { return Vec::new() };
    let resolved = if matches!(target.as_str(), "all" | "default" | "build") {
        text.lines()
            .find(|l| l.starts_with(&format!("{target}:")))
            .and_then(|l| l.split_once(':'))
            .and_then(|(_, rhs)| rhs.split_whitespace().next())
            .map(str::to_string)
    } else {
        Some(target)
    };
    let Some(t) = resolved else { return Vec::new() };
    // `$(PROG)`-style targets resolve through a simple assignment.
    if let Some(var) = t.strip_prefix("$(").and_then(|v| v.strip_suffix(')')) {
        return text
            .lines()
            .find_map(|l| {
                let (k, v) = l.split_once('=')?;
                let k = k.trim().trim_end_matches([':', '?', '+']);
                (k.trim() == var).then(|| v.split_whitespace().next().unwrap_or("").to_string())
            })
            .filter(|v| !v.is_empty())
            .into_iter()
            .collect();
    }
    vec![t]
}

fn initial_image(spec: &BuildSpec, profile: &BaseProfile) -> WorldImage {
    let mut img = WorldImage {
        base: spec.base_image.to_string(),
        codename: profile.codename.clone(),
        eol: profile.eol,
        python: profile.python.clone(),
        tools: profile.tools.iter().map(|t| t.to_string()).collect(),
        apt_updated: false,
        system_packages: BTreeSet::new(),
        python_dists: BTreeSet::new(),
        r_packages: BTreeSet::new(),
        console_scripts: BTreeMap::new(),
        files: BTreeMap::new(),
        dirs: ["/", "/root", "/tmp", "/usr/local/bin"].iter().map(|s| s.to_string()).collect(),
        workdir: spec.workdir.clone(),
    };
    if let Some(v) = &profile.python {
        img.tools.insert(format!("python{v}"));
        for d in ["pip", "setuptools", "wheel"] {
            img.python_dists.insert(d.to_string());
        }
    }
    img.dirs.insert(spec.workdir.clone());
    img
}

/// Interprets `spec` against the build context at `context`.
pub fn build(spec: &BuildSpec, context: &Path) -> Result<Built, ExecError> {
    let ctx = if spec.copy_source {
        if !context.is_dir() {
            return Err(ExecError::Io {
                path: context.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "build context is not a directory"),
            });
        }
        load_context(context)?
    } else {
        Context { files: BTreeMap::new(), fingerprint: sha256_hex("") }
    };
    let image = spec.base_image.to_string();
    let Some(profile) = base_profile(&spec.base_image) else {
        return Ok(Built {
            exit: ExitStatus::Code(1),
            log: format!(
                "#1 [internal] load metadata for docker.io/library/{image}\nERROR: failed to solve: {image}: failed to resolve source metadata for docker.io/library/{image}: not found\n"
            ),
            duration_s: 3.0,
            image: None,
            context_fingerprint: ctx.fingerprint,
        });
    };
    let mut it = Interp {
        img: initial_image(spec, &profile),
        phase: Phase::Build,
        log: Vec::new(),
        duration: 12.0,
        cwd: spec.workdir.clone(),
        depth: 0,
    };
    it.say(format!("#1 FROM docker.io/library/{image}"));
    let mut steps: Vec<String> = Vec::new();
    if !spec.system_packages.is_empty() {
        steps.push(format!(
            "apt-get update && apt-get install -y --no-install-recommends {} && rm -rf /var/lib/apt/lists/*",
            spec.system_packages.join(" ")
        ));
    }
    let n_pre = steps.len();
    steps.extend(spec.build_steps.iter().cloned());
    let total = steps.len();
    let mut n = 2;
    for (i, step) in steps.iter().enumerate() {
        if i == n_pre && spec.copy_source {
            it.say(format!("#{n} COPY . {}", spec.workdir));
            n += 1;
            for (rel, f) in &ctx.files {
                it.put(&format!("{}/{rel}", spec.workdir.trim_end_matches('/')), f.clone());
            }
            it.duration += 1.0;
        }
        it.say(format!("#{n} [{}/{total}] RUN {step}", i + 1));
        n += 1;
        it.cwd = spec.workdir.clone();
        if let Err(f) = it.run_step(step) {
            it.say(format!(
                "ERROR: process \"/bin/sh -c {step}\" did not complete successfully: exit code: {}",
                f.code
            ));
            let mut log = it.log.join("\n");
            log.push('\n');
            return Ok(Built {
                exit: ExitStatus::Code(f.code),
                log,
                duration_s: round_ms(it.duration),
                image: None,
                context_fingerprint: ctx.fingerprint,
            });
        }
    }
    if steps.len() == n_pre && spec.copy_source {
        it.say(format!("#{n} COPY . {}", spec.workdir));
        n += 1;
        for (rel, f) in &ctx.files {
            it.put(&format!("{}/{rel}", spec.workdir.trim_end_matches('/')), f.clone());
        }
    }
    it.say(format!("#{n} exporting to image\n#{n} DONE"));
    let mut log = it.log.join("\n");
    log.push('\n');
    Ok(Built {
        exit: ExitStatus::Code(0),
        log,
        duration_s: round_ms(it.duration),
        image: Some(it.img),
        context_fingerprint: ctx.fingerprint,
    })
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Runs `cmd` in a stored image with networking disabled.
pub fn run(image: &WorldImage, cmd: &[String]) -> RunOutput {
    let mut it = Interp {
        img: image.clone(),
        phase: Phase::Validate,
        log: Vec::new(),
        duration: 0.5,
        cwd: image.workdir.clone(),
        depth: 0,
    };
    let r = match cmd.first().map(String::as_str) {
        Some(p) if it.img.console_scripts.contains_key(p) => {
            let module = it.img.console_scripts[p].clone();
            if module.is_empty() {
                Ok(())
            } else {
                let text = it.text(&module).unwrap_or("").to_string();
                let dirs = vec![parent(&module), parent(&parent(&module))];
                let r = it.check_python_source("python3", &module, &text, &dirs, &mut BTreeSet::new(), 0);
                if r.is_ok() {
                    it.say(format!("usage: {p} [-h] [options]"));
                }
                r
            }
        }
        Some(_) => it.exec(cmd),
        None => Ok(()),
    };
    let exit = match r {
        Ok(()) => ExitStatus::Code(0),
        Err(f) => ExitStatus::Code(f.code),
    };
    let mut log = it.log.join("\n");
    if !log.is_empty() {
        log.push('\n');
    }
    RunOutput { exit, log, duration_s: round_ms(it.duration) }
}

//! Reading build metadata out of manifest text: declared dependencies,
//! console scripts, binary targets and Python imports.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

/// Canonical Python distribution name: lowercase, `_` and `.` become `-`.
pub fn normalize_dist(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace(['_', '.'], "-")
}

fn requirement_name(spec: &str) -> Option<String> {
    let spec = spec.split(';').next()?.trim();
    let end = spec
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.'))
        .unwrap_or(spec.len());
    let name = &spec[..end];
    if name.is_empty() {
        None
    } else {
        Some(normalize_dist(name))
    }
}

/// Parsed `requirements*.txt`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Requirements {
    pub packages: Vec<String>,
    /// Targets of `-r other.txt` lines.
    pub includes: Vec<String>,
}

pub fn parse_requirements(text: &str) -> Requirements {
    let mut out = Requirements::default();
    for raw in text.lines() {
        let line = raw.split(" #").next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("-r").or_else(|| line.strip_prefix("--requirement")) {
            let target = rest.trim_start_matches('=').trim();
            if !target.is_empty() {
                out.includes.push(target.to_string());
            }
            continue;
        }
        if line.starts_with('-') || line.contains("://") {
            continue;
        }
        if let Some(n) = requirement_name(line) {
            out.packages.push(n);
        }
    }
    out
}

/// Python package metadata from `pyproject.toml` or `setup.py`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PythonProject {
    pub name: Option<String>,
    pub dependencies: Vec<String>,
    /// Console-script names, sorted.
    pub scripts: Vec<String>,
}

pub fn parse_pyproject(text: &str) -> PythonProject {
    let mut out = PythonProject::default();
    let Ok(doc) = text.parse::<toml::Table>() else {
        return out;
    };
    if let Some(project) = doc.get("project").and_then(|v| v.as_table()) {
        out.name = project.get("name").and_then(|v| v.as_str()).map(normalize_dist);
        if let Some(deps) = project.get("dependencies").and_then(|v| v.as_array()) {
            out.dependencies
                .extend(deps.iter().filter_map(|d| d.as_str()).filter_map(requirement_name));
        }
        if let Some(s) = project.get("scripts").and_then(|v| v.as_table()) {
            out.scripts.extend(s.keys().cloned());
        }
    }
    let poetry = doc
        .get("tool")
        .and_then(|t| t.get("poetry"))
        .and_then(|v| v.as_table());
    if let Some(poetry) = poetry {
        if out.name.is_none() {
            out.name = poetry.get("name").and_then(|v| v.as_str()).map(normalize_dist);
        }
        if let Some(deps) = poetry.get("dependencies").and_then(|v| v.as_table()) {
            out.dependencies
                .extend(deps.keys().filter(|k| k.as_str() != "python").map(|k| normalize_dist(k)));
        }
        if let Some(s) = poetry.get("scripts").and_then(|v| v.as_table()) {
            out.scripts.extend(s.keys().cloned());
        }
    }
    out.scripts.sort();
    out.scripts.dedup();
    out
}

fn quoted_strings(s: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"["']([^"']+)["']"#).unwrap());
    re.captures_iter(s).map(|c| c[1].to_string()).collect()
}

pub fn parse_setup_py(text: &str) -> PythonProject {
    static NAME: OnceLock<Regex> = OnceLock::new();
    static REQ: OnceLock<Regex> = OnceLock::new();
    static SCRIPTS: OnceLock<Regex> = OnceLock::new();
    let name = NAME.get_or_init(|| Regex::new(r#"\bname\s*=\s*["']([^"']+)["']"#).unwrap());
    let req = REQ.get_or_init(|| Regex::new(r"(?s)install_requires\s*=\s*\[(.*?)\]").unwrap());
    let scripts = SCRIPTS.get_or_init(|| Regex::new(r"(?s)console_scripts['\x22]?\s*[:=]\s*\[(.*?)\]").unwrap());
    let mut out = PythonProject {
        name: name.captures(text).map(|c| normalize_dist(&c[1])),
        ..Default::default()
    };
    if let Some(c) = req.captures(text) {
        out.dependencies = quoted_strings(&c[1]).iter().filter_map(|s| requirement_name(s)).collect();
    }
    if let Some(c) = scripts.captures(text) {
        out.scripts = quoted_strings(&c[1])
            .iter()
            .filter_map(|s| s.split_once('=').map(|(n, _)| n.trim().to_string()))
            .collect();
        out.scripts.sort();
        out.scripts.dedup();
    }
    out
}

/// First explicit rule target of a Makefile, skipping special and pattern rules.
pub fn make_default_target(text: &str) -> Option<String> {
    for line in text.lines() {
        if line.starts_with(['\t', ' ', '#', '.']) {
            continue;
        }
        let Some((lhs, rhs)) = line.split_once(':') else { continue };
        if rhs.starts_with('=') || lhs.contains('=') || lhs.contains('%') || lhs.contains('$') {
            continue;
        }
        if let Some(t) = lhs.split_whitespace().next() {
            return Some(t.to_string());
        }
    }
    None
}

/// Targets named by `add_executable(...)`.
pub fn cmake_executables(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)add_executable\s*\(\s*([A-Za-z0-9_.+-]+)").unwrap());
    re.captures_iter(text).map(|c| c[1].to_string()).collect()
}

/// Programs named by `bin_PROGRAMS = ...` in a `Makefile.am`.
pub fn automake_programs(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?m)^\s*bin_PROGRAMS\s*\+?=\s*(.+)$").unwrap());
    re.captures_iter(text)
        .flat_map(|c| c[1].split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .collect()
}

/// Node package metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodePackage {
    pub name: Option<String>,
    pub main: Option<String>,
    /// `(command, script path)` pairs.
    pub bins: Vec<(String, String)>,
    pub dependencies: Vec<String>,
}

pub fn parse_package_json(text: &str) -> NodePackage {
    let mut out = NodePackage::default();
    let Ok(v) = serde_json::from_str::<serde_json::Value>(text) else {
        return out;
    };
    out.name = v.get("name").and_then(|x| x.as_str()).map(str::to_string);
    out.main = v.get("main").and_then(|x| x.as_str()).map(str::to_string);
    match v.get("bin") {
        Some(serde_json::Value::String(p)) => {
            if let Some(n) = &out.name {
                out.bins.push((n.rsplit('/').next().unwrap_or(n).to_string(), p.clone()));
            }
        }
        Some(serde_json::Value::Object(m)) => {
            for (k, p) in m {
                if let Some(p) = p.as_str() {
                    out.bins.push((k.clone(), p.to_string()));
                }
            }
        }
        _ => {}
    }
    if let Some(d) = v.get("dependencies").and_then(|x| x.as_object()) {
        out.dependencies = d.keys().cloned().collect();
    }
    out
}

/// Binary names a `Cargo.toml` produces.
pub fn cargo_binaries(text: &str) -> Vec<String> {
    let Ok(doc) = text.parse::<toml::Table>() else {
        return Vec::new();
    };
    let mut out: Vec<String> = doc
        .get("bin")
        .and_then(|b| b.as_array())
        .map(|bins| {
            bins.iter()
                .filter_map(|b| b.get("name").and_then(|n| n.as_str()).map(str::to_string))
                .collect()
        })
        .unwrap_or_default();
    if out.is_empty() {
        if let Some(n) = doc.get("package").and_then(|p| p.get("name")).and_then(|n| n.as_str()) {
            out.push(n.to_string());
        }
    }
    out
}

/// `target/<artifactId>-<version>.jar` for a Maven project.
pub fn maven_jar(text: &str) -> Option<String> {
    static PARENT: OnceLock<Regex> = OnceLock::new();
    static ART: OnceLock<Regex> = OnceLock::new();
    static VER: OnceLock<Regex> = OnceLock::new();
    let parent = PARENT.get_or_init(|| Regex::new(r"(?s)<parent>.*?</parent>|<dependencies>.*</dependencies>|<build>.*</build>").unwrap());
    let art = ART.get_or_init(|| Regex::new(r"<artifactId>\s*([^<\s]+)\s*</artifactId>").unwrap());
    let ver = VER.get_or_init(|| Regex::new(r"<version>\s*([^<\s]+)\s*</version>").unwrap());
    let body = parent.replace_all(text, "");
    let a = art.captures(&body)?[1].to_string();
    let v = ver.captures(&body)?[1].to_string();
    Some(format!("target/{a}-{v}.jar"))
}

/// Top-level modules imported by a Python source file. Relative imports are
/// skipped.
pub fn python_imports(source: &str) -> BTreeSet<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?m)^(?:from\s+([A-Za-z_][\w.]*)\s+import\b|import\s+([A-Za-z_][\w.]*(?:\s*(?:as\s+\w+)?\s*,\s*[A-Za-z_][\w.]*)*))").unwrap()
    });
    let mut out = BTreeSet::new();
    for c in re.captures_iter(source) {
        if let Some(m) = c.get(1) {
            out.insert(m.as_str().split('.').next().unwrap_or("").to_string());
        }
        if let Some(m) = c.get(2) {
            for part in m.as_str().split(',') {
                let module = part.split_whitespace().next().unwrap_or("");
                let top = module.split('.').next().unwrap_or("");
                if !top.is_empty() {
                    out.insert(top.to_string());
                }
            }
        }
    }
    out
}

const IMPORT_ALIASES: &[(&str, &str)] = &[
    ("sklearn", "scikit-learn"),
    ("skimage", "scikit-image"),
    ("yaml", "pyyaml"),
    ("cv2", "opencv-python"),
    ("pil", "pillow"),
    ("bio", "biopython"),
    ("bs4", "beautifulsoup4"),
    ("dateutil", "python-dateutil"),
    ("attr", "attrs"),
    ("mpl_toolkits", "matplotlib"),
    ("google", "protobuf"),
    ("dotenv", "python-dotenv"),
    ("jwt", "pyjwt"),
    ("serial", "pyserial"),
    ("magic", "python-magic"),
    ("openbabel", "openbabel-wheel"),
];

/// Distribution that provides an import name.
pub fn dist_for_import(module: &str) -> String {
    let lower = module.to_ascii_lowercase();
    IMPORT_ALIASES
        .iter()
        .find(|(m, _)| *m == lower)
        .map(|(_, d)| d.to_string())
        .unwrap_or_else(|| normalize_dist(&lower))
}

const PY_STDLIB: &[&str] = &[
    "__future__", "abc", "argparse", "array", "ast", "asyncio", "base64", "bisect", "builtins", "bz2",
    "calendar", "cmath", "collections", "concurrent", "configparser", "contextlib", "copy", "csv",
    "ctypes", "dataclasses", "datetime", "decimal", "difflib", "email", "enum", "errno", "fnmatch",
    "fractions", "functools", "gc", "getopt", "getpass", "glob", "gzip", "hashlib", "heapq", "hmac",
    "html", "http", "importlib", "inspect", "io", "ipaddress", "itertools", "json", "logging", "lzma",
    "math", "mimetypes", "multiprocessing", "numbers", "operator", "optparse", "os", "pathlib",
    "pickle", "platform", "pprint", "queue", "random", "re", "sched", "secrets", "select", "shelve",
    "shlex", "shutil", "signal", "socket", "sqlite3", "ssl", "stat", "statistics", "string", "struct",
    "subprocess", "sys", "tarfile", "tempfile", "textwrap", "threading", "time", "timeit", "tkinter",
    "traceback", "types", "typing", "unicodedata", "unittest", "urllib", "uuid", "warnings", "weakref",
    "xml", "zipfile", "zlib",
];

pub fn is_python_stdlib(module: &str) -> bool {
    PY_STDLIB.contains(&module)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requirements_lines() {
        let r = parse_requirements(
            "# comment\nnumpy>=1.20\nscikit_learn[all]==1.0 ; python_version>'3'\n-r base.txt\n--index-url x\ngit+https://x/y.git\nPyYAML  # cfg\n",
        );
        assert_eq!(r.packages, vec!["numpy", "scikit-learn", "pyyaml"]);
        assert_eq!(r.includes, vec!["base.txt"]);
    }

    #[test]
    fn pyproject_pep621_and_poetry() {
        let p = parse_pyproject(
            "[project]\nname = \"My_Tool\"\ndependencies = [\"numpy>=1\", \"scipy\"]\n[project.scripts]\nmytool = \"my_tool.cli:main\"\n",
        );
        assert_eq!(p.name.as_deref(), Some("my-tool"));
        assert_eq!(p.dependencies, vec!["numpy", "scipy"]);
        assert_eq!(p.scripts, vec!["mytool"]);
        let p = parse_pyproject(
            "[tool.poetry]\nname = \"x\"\n[tool.poetry.dependencies]\npython = \"^3.9\"\nrequests = \"*\"\n[tool.poetry.scripts]\nxx = \"x:main\"\n",
        );
        assert_eq!(p.dependencies, vec!["requests"]);
        assert_eq!(p.scripts, vec!["xx"]);
    }

    #[test]
    fn setup_py() {
        let p = parse_setup_py(
            "setup(name='fold_it', install_requires=['numpy', \"biopython>=1.7\"],\n entry_points={'console_scripts': ['foldit = fold_it.cli:main']})",
        );
        assert_eq!(p.name.as_deref(), Some("fold-it"));
        assert_eq!(p.dependencies, vec!["numpy", "biopython"]);
        assert_eq!(p.scripts, vec!["foldit"]);
    }

    #[test]
    fn build_targets() {
        assert_eq!(
            make_default_target("CC=gcc\n.PHONY: all\n%.o: %.c\n\tcc\nsolver: main.o\n\t$(CC) -o solver\nclean:\n").as_deref(),
            Some("solver")
        );
        assert_eq!(cmake_executables("project(x)\nadd_executable(simx main.cpp)\n"), vec!["simx"]);
        assert_eq!(automake_programs("bin_PROGRAMS = aln tool2\n"), vec!["aln", "tool2"]);
        assert_eq!(cargo_binaries("[package]\nname = \"rtool\"\n"), vec!["rtool"]);
        assert_eq!(
            maven_jar("<project><parent><artifactId>p</artifactId><version>9</version></parent><artifactId>app</artifactId><version>1.2</version></project>").as_deref(),
            Some("target/app-1.2.jar")
        );
    }

    #[test]
    fn node_bins() {
        let n = parse_package_json(r#"{"name":"@org/cli","bin":"bin/run.js","dependencies":{"yargs":"1"}}"#);
        assert_eq!(n.bins, vec![("cli".to_string(), "bin/run.js".to_string())]);
        assert_eq!(n.dependencies, vec!["yargs"]);
    }

    #[test]
    fn imports() {
        let i = python_imports("import os, sys\nimport numpy as np\nfrom sklearn.linear_model import X\nfrom . import y\n  import hidden\n");
        assert_eq!(i.into_iter().collect::<Vec<_>>(), vec!["numpy", "os", "sklearn", "sys"]);
        assert_eq!(dist_for_import("sklearn"), "scikit-learn");
        assert_eq!(dist_for_import("Bio"), "biopython");
        assert!(is_python_stdlib("argparse"));
    }
}

use std::collections::BTreeMap;

use super::snapshot::RepoSnapshot;

/// Byte share per language. Shares sum to 1 when non-empty.
pub type LanguageProfile = BTreeMap<String, f64>;

const EXTENSIONS: &[(&str, &str)] = &[
    ("py", "Python"),
    ("pyx", "Python"),
    ("ipynb", "Jupyter Notebook"),
    ("c", "C"),
    ("h", "C"),
    ("cc", "C++"),
    ("cpp", "C++"),
    ("cxx", "C++"),
    ("hpp", "C++"),
    ("hh", "C++"),
    ("hxx", "C++"),
    ("cu", "CUDA"),
    ("f", "Fortran"),
    ("for", "Fortran"),
    ("f77", "Fortran"),
    ("f90", "Fortran"),
    ("f95", "Fortran"),
    ("f03", "Fortran"),
    ("f08", "Fortran"),
    ("r", "R"),
    ("rmd", "R"),
    ("jl", "Julia"),
    ("java", "Java"),
    ("kt", "Kotlin"),
    ("scala", "Scala"),
    ("js", "JavaScript"),
    ("mjs", "JavaScript"),
    ("ts", "TypeScript"),
    ("rs", "Rust"),
    ("go", "Go"),
    ("sh", "Shell"),
    ("bash", "Shell"),
    ("m", "MATLAB"),
    ("pl", "Perl"),
    ("pm", "Perl"),
    ("rb", "Ruby"),
    ("cs", "C#"),
    ("hs", "Haskell"),
    ("ml", "OCaml"),
    ("lua", "Lua"),
    ("swift", "Swift"),
    ("php", "PHP"),
    ("tcl", "Tcl"),
    ("nim", "Nim"),
    ("zig", "Zig"),
    ("d", "D"),
    ("pas", "Pascal"),
    ("ex", "Elixir"),
    ("erl", "Erlang"),
    ("clj", "Clojure"),
    ("groovy", "Groovy"),
    ("dart", "Dart"),
    ("vhd", "VHDL"),
    ("v", "Verilog"),
    ("sql", "SQL"),
];

pub fn language_for_path(path: &str) -> Option<&'static str> {
    let name = path.rsplit('/').next().unwrap_or(path);
    let (_, ext) = name.rsplit_once('.')?;
    let ext = ext.to_ascii_lowercase();
    EXTENSIONS.iter().find(|(e, _)| *e == ext).map(|(_, l)| *l)
}

pub(crate) fn profile_from_sizes<'a>(files: impl Iterator<Item = (&'a str, u64)>) -> LanguageProfile {
    let mut bytes: BTreeMap<String, u64> = BTreeMap::new();
    for (path, size) in files {
        if let Some(lang) = language_for_path(path) {
            *bytes.entry(lang.to_string()).or_default() += size;
        }
    }
    let total: u64 = bytes.values().sum();
    if total == 0 {
        // Only zero-byte sources: split evenly rather than divide by zero.
        let n = bytes.len();
        return bytes.into_keys().map(|l| (l, 1.0 / n as f64)).collect();
    }
    bytes
        .into_iter()
        .map(|(l, b)| (l, b as f64 / total as f64))
        .collect()
}

/// Byte share per recognized source language.
pub fn detect_languages(snapshot: &RepoSnapshot) -> LanguageProfile {
    profile_from_sizes(
        snapshot
            .file_index
            .iter()
            .filter(|f| !f.symlink)
            .map(|f| (f.path.as_str(), f.size)),
    )
}

/// Largest share wins; ties go to the lexicographically smallest name.
/// Empty profiles yield `"unknown"`.
pub fn primary_language(profile: &LanguageProfile) -> String {
    let mut best: Option<(&String, f64)> = None;
    for (lang, share) in profile {
        // BTreeMap iterates in name order, so strict > keeps the first on ties.
        if best.map_or(true, |(_, s)| *share > s) {
            best = Some((lang, *share));
        }
    }
    best.map(|(l, _)| l.clone()).unwrap_or_else(|| "unknown".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_file_full_share() {
        let p = profile_from_sizes([("a.py", 100)].into_iter());
        assert_eq!(p.get("Python"), Some(&1.0));
        assert_eq!(primary_language(&p), "Python");
    }

    #[test]
    fn sixty_forty() {
        let p = profile_from_sizes([("a.c", 600), ("b.py", 400), ("README.md", 999)].into_iter());
        assert!((p["C"] - 0.6).abs() < 1e-12);
        assert!((p["Python"] - 0.4).abs() < 1e-12);
        assert_eq!(primary_language(&p), "C");
    }

    #[test]
    fn tie_is_lexicographic() {
        let p = profile_from_sizes([("a.rs", 50), ("b.go", 50)].into_iter());
        assert_eq!(primary_language(&p), "Go");
    }

    #[test]
    fn nothing_recognized() {
        let p = profile_from_sizes([("README.md", 10)].into_iter());
        assert!(p.is_empty());
        assert_eq!(primary_language(&p), "unknown");
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analyzer::{classify_file, manifest_kind, FileKind};
use crate::clients::RepoMetadata;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    CuratedList,
    NoExecutableContent,
    Archived,
    License,
    Tutorial,
}

impl RuleId {
    pub const ALL: [RuleId; 5] =
        [RuleId::CuratedList, RuleId::NoExecutableContent, RuleId::Archived, RuleId::License, RuleId::Tutorial];

    /// Report bucket name: the rule letter plus a label.
    pub fn bucket(self) -> &'static str {
        match self {
            RuleId::CuratedList => "a_curated_list",
            RuleId::NoExecutableContent => "b_no_executable_content",
            RuleId::Archived => "c_archived",
            RuleId::License => "d_license",
            RuleId::Tutorial => "e_tutorial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunnelRules {
    /// Substrings of the name or description marking curated lists.
    pub curated_list_patterns: Vec<String>,
    /// Substrings of the description marking courseware.
    pub tutorial_patterns: Vec<String>,
    pub license_allowlist: Vec<String>,
    /// Whether `unknown` licenses pass.
    pub allow_unknown_license: bool,
}

impl Default for FunnelRules {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        FunnelRules {
            curated_list_patterns: s(&["awesome-", "list of", "curated list"]),
            tutorial_patterns: s(&["tutorial", "course material", "coursework", "lecture", "workshop", "homework"]),
            license_allowlist: s(&[
                "mit", "apache-2.0", "bsd-2-clause", "bsd-3-clause", "isc", "mpl-2.0", "lgpl-2.1", "lgpl-3.0",
                "gpl-2.0", "gpl-3.0", "agpl-3.0", "epl-2.0", "unlicense", "zlib", "bsl-1.0", "cc0-1.0",
            ]),
            allow_unknown_license: true,
        }
    }
}

fn contains_any(text: &str, patterns: &[String]) -> bool {
    let t = text.to_lowercase();
    patterns.iter().any(|p| t.contains(&p.to_lowercase()))
}

/// First rule (in a..e order) rejecting the repo, if any.
pub fn apply_rules(repo: &RepoMetadata, files: &[String], rules: &FunnelRules) -> Option<RuleId> {
    if contains_any(repo.name(), &rules.curated_list_patterns)
        || contains_any(&repo.description, &rules.curated_list_patterns)
    {
        return Some(RuleId::CuratedList);
    }
    let executable = files
        .iter()
        .any(|f| matches!(classify_file(f), FileKind::Source | FileKind::Manifest));
    if !executable {
        return Some(RuleId::NoExecutableContent);
    }
    if repo.is_archived {
        return Some(RuleId::Archived);
    }
    let lic = repo.license_id.to_lowercase();
    let unknown_ok = rules.allow_unknown_license && (lic == "unknown" || lic.is_empty());
    if !unknown_ok && !rules.license_allowlist.iter().any(|l| l.eq_ignore_ascii_case(&lic)) {
        return Some(RuleId::License);
    }
    let has_manifest = files.iter().any(|f| manifest_kind(f).is_some_and(|k| k.is_build_system()));
    if contains_any(&repo.description, &rules.tutorial_patterns) && !has_manifest {
        return Some(RuleId::Tutorial);
    }
    None
}

/// File-kind counts handed to the semantic classifier.
pub fn inventory_summary(files: &[String]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for f in files {
        let k = match classify_file(f) {
            FileKind::Source => "source",
            FileKind::Manifest => "manifest",
            FileKind::Doc => "doc",
            FileKind::Data => "data",
            FileKind::Ci => "ci",
            FileKind::ContainerRecipe => "container_recipe",
            _ => "other",
        };
        *out.entry(k.to_string()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo(name: &str, desc: &str) -> RepoMetadata {
        RepoMetadata {
            repo_id: format!("github.com/o/{name}"),
            url: String::new(),
            license_id: "mit".into(),
            primary_language: "python".into(),
            star_count: 0,
            is_archived: false,
            description: desc.into(),
            topics: vec![],
        }
    }

    fn files(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn each_rule() {
        let r = FunnelRules::default();
        let code = files(&["main.py"]);
        assert_eq!(apply_rules(&repo("awesome-chemistry", ""), &code, &r), Some(RuleId::CuratedList));
        assert_eq!(apply_rules(&repo("x", ""), &files(&["README.md"]), &r), Some(RuleId::NoExecutableContent));
        let mut a = repo("x", "");
        a.is_archived = true;
        assert_eq!(apply_rules(&a, &code, &r), Some(RuleId::Archived));
        let mut l = repo("x", "");
        l.license_id = "proprietary".into();
        assert_eq!(apply_rules(&l, &code, &r), Some(RuleId::License));
        l.license_id = "unknown".into();
        assert_eq!(apply_rules(&l, &code, &r), None);
        assert_eq!(apply_rules(&repo("x", "Tutorial notebooks"), &code, &r), Some(RuleId::Tutorial));
        assert_eq!(apply_rules(&repo("x", "Tutorial notebooks"), &files(&["main.py", "setup.py"]), &r), None);
    }
}

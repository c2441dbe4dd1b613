//! Brute-force reading of the funnel rules over the raw fixture files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde_json::Value;

use super::{read_json, read_jsonl};

pub fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/funnel")
}

/// Straight reading of the funnel rules over the raw fixture files.
pub struct Oracle {
    pub counts: Vec<usize>,
    pub buckets: BTreeMap<String, BTreeSet<String>>,
    pub survivors: BTreeSet<String>,
    pub unclassified: BTreeSet<String>,
}

pub fn oracle(dir: &Path) -> Oracle {
    const SOURCE_EXT: &[&str] = &["py", "c", "cpp", "rs", "f90", "js", "sh"];
    const MANIFESTS: &[&str] =
        &["setup.py", "pyproject.toml", "requirements.txt", "Cargo.toml", "CMakeLists.txt", "Makefile", "package.json"];
    const LICENSES: &[&str] = &[
        "mit", "apache-2.0", "bsd-2-clause", "bsd-3-clause", "isc", "mpl-2.0", "lgpl-2.1", "lgpl-3.0", "gpl-2.0",
        "gpl-3.0", "agpl-3.0", "epl-2.0", "unlicense", "zlib", "bsl-1.0", "cc0-1.0",
    ];

    let repos = read_jsonl(&dir.join("host/repos.jsonl"));
    let trees = read_json(&dir.join("host/trees.json"));
    let edges = read_jsonl(&dir.join("host/edges.jsonl"));
    let tax = read_json(&dir.join("taxonomy.json"));
    let table = read_json(&dir.join("model/completions.json"));
    let answer = |task: &str, subject: &str| -> Option<Result<String, ()>> {
        table["entries"].as_array().unwrap().iter().find_map(|e| {
            (e["task"] == task && e["subject"] == subject).then(|| match e["response"].as_str() {
                Some(r) => Ok(r.to_string()),
                None => Err(()),
            })
        })
    };

    let mut keywords = Vec::new();
    for d in tax["domains"].as_array().unwrap() {
        let mut kws: Vec<String> = match answer("expand_keywords", d["id"].as_str().unwrap()) {
            Some(Ok(text)) => text.split([';', ',', '\n']).map(|k| k.trim().to_lowercase()).collect(),
            _ => vec![],
        };
        if kws.is_empty() {
            kws.push(d["name"].as_str().unwrap().to_lowercase());
        }
        keywords.extend(kws);
    }

    let by_id: BTreeMap<String, &Value> =
        repos.iter().map(|r| (r["repo_id"].as_str().unwrap().to_string(), r)).collect();
    let hits = |r: &Value| {
        let name = r["repo_id"].as_str().unwrap().rsplit('/').next().unwrap().to_lowercase();
        let desc = r["description"].as_str().unwrap().to_lowercase();
        let topics: Vec<String> =
            r["topics"].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_lowercase()).collect();
        keywords.iter().any(|k| name.contains(k.as_str()) || desc.contains(k.as_str()) || topics.contains(k))
    };
    let raw: BTreeSet<String> = by_id.iter().filter(|(_, r)| hits(r)).map(|(id, _)| id.clone()).collect();
    let mut expanded = raw.clone();
    for e in &edges {
        let (from, to) = (e["from"].as_str().unwrap(), e["to"].as_str().unwrap());
        if raw.contains(from) && by_id.contains_key(to) {
            expanded.insert(to.to_string());
        }
    }

    let mut buckets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut tool_like = BTreeSet::new();
    for id in &expanded {
        let r = by_id[id];
        let files: Vec<&str> = trees[id].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
        let base = |f: &str| f.rsplit('/').next().unwrap().to_string();
        let manifest = files.iter().any(|f| MANIFESTS.contains(&base(f).as_str()));
        let source = files.iter().any(|f| f.rsplit_once('.').is_some_and(|(_, ext)| SOURCE_EXT.contains(&ext)));
        let name = id.rsplit('/').next().unwrap().to_lowercase();
        let desc = r["description"].as_str().unwrap().to_lowercase();
        let lic = r["license_id"].as_str().unwrap().to_lowercase();
        let curated = ["awesome-", "list of", "curated list"].iter().any(|p| name.contains(p) || desc.contains(p));
        let tutorial = ["tutorial", "course material", "coursework", "lecture", "workshop", "homework"]
            .iter()
            .any(|p| desc.contains(p));
        let bucket = if curated {
            Some("a_curated_list")
        } else if !(manifest || source) {
            Some("b_no_executable_content")
        } else if r["is_archived"].as_bool().unwrap() {
            Some("c_archived")
        } else if lic != "unknown" && !LICENSES.contains(&lic.as_str()) {
            Some("d_license")
        } else if tutorial && !manifest {
            Some("e_tutorial")
        } else {
            None
        };
        match bucket {
            Some(b) => {
                buckets.entry(b.to_string()).or_default().insert(id.clone());
            }
            None => {
                tool_like.insert(id.clone());
            }
        }
    }

    let mut survivors = BTreeSet::new();
    let mut unclassified = BTreeSet::new();
    for id in &tool_like {
        match answer("classify_tool", id) {
            Some(Ok(label)) if label == "executable scientific tool" => {
                survivors.insert(id.clone());
            }
            Some(Ok(_)) => {
                buckets.entry("semantic".into()).or_default().insert(id.clone());
            }
            _ => {
                survivors.insert(id.clone());
                unclassified.insert(id.clone());
            }
        }
    }
    Oracle {
        counts: vec![raw.len(), expanded.len(), tool_like.len(), survivors.len()],
        buckets,
        survivors,
        unclassified,
    }
}

/// Copy of the corpus with every list shuffled.
pub fn copy_shuffled(seed: u64) -> tempfile::TempDir {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let tmp = tempfile::tempdir().unwrap();
    let src = corpus();
    std::fs::create_dir_all(tmp.path().join("host")).unwrap();
    std::fs::create_dir_all(tmp.path().join("model")).unwrap();
    for f in ["host/repos.jsonl", "host/edges.jsonl"] {
        let text = std::fs::read_to_string(src.join(f)).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.shuffle(&mut rng);
        std::fs::write(tmp.path().join(f), lines.join("\n") + "\n").unwrap();
    }
    let mut tree = read_json(&src.join("host/trees.json"));
    for files in tree.as_object_mut().unwrap().values_mut() {
        files.as_array_mut().unwrap().shuffle(&mut rng);
    }
    std::fs::write(tmp.path().join("host/trees.json"), tree.to_string()).unwrap();
    let mut tax = read_json(&src.join("taxonomy.json"));
    tax["domains"].as_array_mut().unwrap().shuffle(&mut rng);
    std::fs::write(tmp.path().join("taxonomy.json"), tax.to_string()).unwrap();
    let mut table = read_json(&src.join("model/completions.json"));
    table["entries"].as_array_mut().unwrap().shuffle(&mut rng);
    std::fs::write(tmp.path().join("model/completions.json"), table.to_string()).unwrap();
    tmp
}

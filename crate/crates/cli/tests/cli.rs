use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn bin(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deployforge"));
    c.current_dir(dir);
    for (k, _) in std::env::vars() {
        if k.starts_with("DEPLOYFORGE_") {
            c.env_remove(k);
        }
    }
    c
}

/// `run-all` style invocation with every output redirected below `out`.
fn e2e(out: &Path) -> Command {
    let mut c = bin(out);
    c.arg("--config")
        .arg(fixtures().join("e2e/config.toml"))
        .env("DEPLOYFORGE_WORKSPACE", out.join("work"))
        .env("DEPLOYFORGE_TRACE__PATH", out.join("trace.jsonl"))
        .env("DEPLOYFORGE_REGISTRY__PATH", out.join("registry.jsonl"));
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn run_all_writes_the_golden_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(e2e(tmp.path()).args(["run-all", "--pool"]).arg(fixtures().join("e2e/pool.jsonl")));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("successes 9 failures 1 registered 9 retries 1"), "{}", stdout(&o));
    assert_eq!(read(&tmp.path().join("trace.jsonl")), read(&fixtures().join("e2e/golden/trace.jsonl")));
    assert_eq!(read(&tmp.path().join("registry.jsonl")), read(&fixtures().join("e2e/golden/registry.jsonl")));

    let o = run(e2e(tmp.path()).args(["--sequential", "run-all", "--pool"]).arg(fixtures().join("e2e/pool.jsonl")));
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("skipped 10"), "{}", stdout(&o));

    let o = run(e2e(tmp.path()).args(["search", "phylogenetic tree", "--limit", "1"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hit: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(hit["name"], "phylotree");

    let id = hit["tool_id"].as_str().unwrap();
    let o = run(e2e(tmp.path()).args(["export", id]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["tool_id"], id);
    assert!(m["image_digest"].as_str().unwrap().starts_with("sha256:"));

    let o = run(e2e(tmp.path()).args(["export", "github.com/nobody/nothing"]));
    assert_eq!(code(&o), 2);

    let rep = tmp.path().join("report");
    let o = run(e2e(tmp.path()).args(["report", "--format", "csv", "--out"]).arg(&rep));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let outcomes = read(&rep.join("outcomes.csv"));
    assert!(outcomes.lines().count() >= 2, "{outcomes}");
}

#[test]
fn budget_file_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let budget = tmp.path().join("budget.json");
    std::fs::write(&budget, r#"{"cpu_slots": 2, "memory_bytes": 17179869184, "long_tail_slots": 1, "queue_cap": 100}"#)
        .unwrap();
    let o = run(e2e(tmp.path())
        .args(["run-all", "--pool"])
        .arg(fixtures().join("e2e/pool.jsonl"))
        .arg("--budget")
        .arg(&budget));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("candidates 10"));

    std::fs::write(&budget, r#"{"cpu_slotz": 2}"#).unwrap();
    let o = run(e2e(tmp.path()).args(["run-all", "--pool"]).arg(fixtures().join("e2e/pool.jsonl")).arg("--budget").arg(&budget));
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_pool_exits_with_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    std::fs::write(&pool, "\n").unwrap();
    let o = run(e2e(tmp.path()).args(["run-all", "--pool"]).arg(&pool));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("pool is empty"), "{}", stderr(&o));
    assert!(!tmp.path().join("trace.jsonl").exists());
}

#[test]
fn unknown_config_key_exits_with_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[scheduler]\nworkerz = 3\n").unwrap();
    let o = run(bin(tmp.path()).arg("--config").arg(&cfg).arg("report"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("workerz"), "{}", stderr(&o));

    let o = run(bin(tmp.path()).env("DEPLOYFORGE_SCHEDULER__WORKERS", "0").arg("report"));
    assert_eq!(code(&o), 2);
}

#[test]
fn analyze_plan_build_validate_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = fixtures().join("repos/seqstats");
    let d = tmp.path();
    let o = run(bin(d).arg("analyze").arg(&repo).args(["--out", "ev.json"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ev: serde_json::Value = serde_json::from_str(&read(&d.join("ev.json"))).unwrap();
    assert!(ev["evidence"].is_object());

    let o = run(bin(d).args(["plan", "ev.json", "--out", "spec.recipe", "--max-rounds", "3"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let spec = read(&d.join("spec.recipe"));
    assert!(spec.starts_with("FROM "), "{spec}");
    assert!(d.join("transcript.json").exists());

    let o = run(bin(d).args(["build", "spec.recipe", "--out", "res.json", "--context"]).arg(&repo));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let res: serde_json::Value = serde_json::from_str(&read(&d.join("res.json"))).unwrap();
    assert_eq!(res["outcome"], "success");
    let digest = res["image_digest"].as_str().unwrap();

    let o = run(bin(d).args(["validate", digest, "--cmd", "python", "main.py", "--help"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true, "{v}");

    let limits = d.join("limits.json");
    std::fs::write(&limits, r#"{"build_timeout_s": 10, "validate_timeout_s": 20}"#).unwrap();
    let o = run(bin(d).args(["build", "spec.recipe", "--limits"]).arg(&limits));
    assert_eq!(code(&o), 2);
}

#[test]
fn discover_writes_pool_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let f = fixtures().join("funnel");
    let o = run(bin(tmp.path())
        .env("DEPLOYFORGE_CLIENTS__FIXTURES", &f)
        .arg("discover")
        .arg("--taxonomy")
        .arg(f.join("taxonomy.json"))
        .args(["--out", "pool.jsonl", "--report", "funnel.json"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&tmp.path().join("pool.jsonl")).lines().count(), 6);
    let report: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("funnel.json"))).unwrap();
    assert!(report.is_object());

    let o = run(bin(tmp.path())
        .env("DEPLOYFORGE_CLIENTS__FIXTURES", &f)
        .arg("discover")
        .arg("--taxonomy")
        .arg(f.join("taxonomy.json"))
        .args(["--stage", "raw", "--out", "raw.jsonl"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&tmp.path().join("raw.jsonl")).lines().count(), 12);
}

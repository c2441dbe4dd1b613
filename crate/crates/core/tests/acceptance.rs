//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p deployforge-core --test acceptance`.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use deployforge_core::clients::{Clients, RetryPolicy};
use deployforge_core::config::load_config_with_env;
use deployforge_core::executor::{classify_failure, ExitStatus, FailureCategory, Outcome, Phase};
use deployforge_core::funnel::{run_funnel, FunnelConfig};
use deployforge_core::par::Exec;
use deployforge_core::pipeline::{load_pool, Pipeline};
use deployforge_core::recipe::{BuildSpec, ImageRef, NoReviewer, RuleReviewer};
use deployforge_core::registry::{assign_domains, Registration, Registry};
use deployforge_core::scheduler::{Budget, Completion, Cost, Scheduler, WorkItem};
use deployforge_core::taxonomy::DomainTaxonomy;
use deployforge_core::trace::synth::SyntheticTrace;
use deployforge_core::trace::{ingest, summarize, TraceWriter};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;

mod common;

use common::funnel_oracle::{copy_shuffled, corpus, oracle};
use common::{fixtures, sort_oracle};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn aggregate() -> Check {
    let records = SyntheticTrace::default().generate();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("trace.jsonl");
    let mut w = TraceWriter::append(&path).unwrap();
    for r in &records {
        w.write(r).unwrap();
    }
    drop(w);
    let recs = ingest(&path).unwrap().records;
    let ok = recs.iter().filter(|r| r.outcome == Outcome::Success).count() as u64;
    let mut direct: BTreeMap<FailureCategory, u64> = BTreeMap::new();
    for r in recs.iter().filter(|r| r.outcome == Outcome::Failure) {
        *direct.entry(r.failure_category.unwrap()).or_insert(0) += 1;
    }
    let s = summarize(&recs, 5, Exec::Parallel).unwrap();
    ensure!(s.attempts == 52_550 && ok == 50_112, "attempts {} successes {ok}", s.attempts);
    ensure!(s.successes == ok, "summary successes {} vs recount {ok}", s.successes);
    ensure!((s.success_rate - 50_112.0 / 52_550.0).abs() <= 1e-9, "rate {}", s.success_rate);
    ensure!(s.success_rate_display() == "95.36%", "display {}", s.success_rate_display());
    ensure!(s.histogram_total() == 2_438, "histogram total {}", s.histogram_total());
    for c in &s.failure_histogram {
        ensure!(direct.get(&c.category) == Some(&c.count), "{} count {}", c.category, c.count);
    }
    Ok(format!("{} / {} = {}, histogram {}", s.successes, s.attempts, s.success_rate_display(), s.histogram_total()))
}

fn funnel() -> Check {
    let run = |dir: &Path, exec: Exec| {
        let clients = Clients::mock(dir).unwrap().with_retry(RetryPolicy::immediate(2));
        let tax = DomainTaxonomy::load(&dir.join("taxonomy.json")).unwrap();
        run_funnel(&tax, &clients, &FunnelConfig::default(), exec, None).unwrap()
    };
    let want = oracle(&corpus());
    let (pool, report) = run(&corpus(), Exec::Parallel);
    ensure!(report.counts() == want.counts, "stage counts {:?} vs oracle {:?}", report.counts(), want.counts);
    let mut got_buckets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (bucket, ids) in &report.rejected {
        ensure!(report.rejections[bucket] == ids.len(), "bucket {bucket} count");
        got_buckets.insert(bucket.clone(), ids.iter().cloned().collect());
    }
    ensure!(got_buckets == want.buckets, "buckets {got_buckets:?} vs oracle {:?}", want.buckets);
    let survivors: BTreeSet<String> = pool.members.keys().cloned().collect();
    ensure!(survivors == want.survivors, "survivors differ");
    let jsonl = pool.to_jsonl();
    for seed in 0..3 {
        let tmp = copy_shuffled(seed);
        for exec in [Exec::Sequential, Exec::Parallel] {
            let (p, r) = run(tmp.path(), exec);
            ensure!(p.to_jsonl() == jsonl, "shuffle {seed} changed the pool");
            ensure!(r.without_timing() == report.without_timing(), "shuffle {seed} changed the report");
        }
    }
    Ok(format!("stages {:?}, {} buckets, 3 shuffles x 2 modes identical", want.counts, want.buckets.len()))
}

fn e2e_run(out: &Path, pool: &[deployforge_core::clients::RepoMetadata], exec: Exec) -> (String, String) {
    let env = [
        ("DEPLOYFORGE_WORKSPACE", out.join("work")),
        ("DEPLOYFORGE_TRACE__PATH", out.join("trace.jsonl")),
        ("DEPLOYFORGE_REGISTRY__PATH", out.join("registry.jsonl")),
    ]
    .map(|(k, v)| (k.to_string(), v.display().to_string()));
    let cfg = load_config_with_env(&fixtures().join("e2e/config.toml"), env).unwrap();
    let summary = Pipeline::from_config(&cfg, exec).unwrap().run_all(pool).unwrap();
    assert_eq!(summary.exit_code(), 0);
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    (read(&out.join("trace.jsonl")), read(&out.join("registry.jsonl")))
}

fn golden_run() -> Check {
    let e2e = fixtures().join("e2e");
    let pool = load_pool(&e2e.join("pool.jsonl")).unwrap();
    ensure!(pool.len() == 10, "pool has {} candidates", pool.len());
    let golden = (
        std::fs::read_to_string(e2e.join("golden/trace.jsonl")).unwrap(),
        std::fs::read_to_string(e2e.join("golden/registry.jsonl")).unwrap(),
    );
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for i in 0..6 {
        let mut p = pool.clone();
        if i >= 3 {
            p.shuffle(&mut rng);
        }
        let exec = if i % 2 == 0 { Exec::Parallel } else { Exec::Sequential };
        let tmp = tempfile::tempdir().unwrap();
        let got = e2e_run(tmp.path(), &p, exec);
        ensure!(got.0 == golden.0, "run {i}: trace differs from golden");
        ensure!(got.1 == golden.1, "run {i}: registry differs from golden");
    }
    Ok(format!("3 repeated + 3 shuffled runs byte-identical ({} trace lines)", golden.0.lines().count()))
}

fn uplift() -> Check {
    let work = tempfile::tempdir().unwrap();
    let names: Vec<String> = common::uplift::expected().into_keys().collect();
    ensure!(names.len() == 20, "{} fixtures", names.len());
    let (mut alone, mut reviewed) = (0, 0);
    for n in &names {
        alone += usize::from(common::uplift::deploys(n, &NoReviewer, 1, work.path()));
        reviewed += usize::from(common::uplift::deploys(n, &RuleReviewer, 4, work.path()));
    }
    ensure!(alone == 11, "proposer alone {alone}/20");
    ensure!(reviewed >= 19, "proposer + reviewer {reviewed}/20");
    Ok(format!("proposer alone {alone}/20, with reviewer {reviewed}/20"))
}

fn classifier() -> Check {
    let dir = fixtures().join("logs");
    let labels: BTreeMap<String, FailureCategory> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("labels.json")).unwrap()).unwrap();
    ensure!(labels.len() >= 30, "{} logs", labels.len());
    let mut per: BTreeMap<FailureCategory, usize> = BTreeMap::new();
    let mut wrong = Vec::new();
    for (file, want) in &labels {
        *per.entry(*want).or_insert(0) += 1;
        let text = std::fs::read_to_string(dir.join(file)).unwrap();
        let phase = if text.starts_with("Running validation") { Phase::Validate } else { Phase::Build };
        let got = classify_failure(&text, &ExitStatus::Code(1), phase).unwrap();
        if got != *want {
            wrong.push(format!("{file}: {want} vs {got}"));
        }
    }
    ensure!(per.len() == 6 && per.values().all(|n| *n >= 4), "per-category counts {per:?}");
    ensure!(wrong.is_empty(), "disagreements: {}", wrong.join("; "));
    Ok(format!("{}/{} logs agree", labels.len(), labels.len()))
}

fn scheduler() -> Check {
    let config = Config { cases: 1000, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let (cases, jobs) = (Cell::new(0usize), Cell::new(0usize));
    runner
        .run(&common::sched_model::workload(), |w| {
            cases.set(cases.get() + 1);
            jobs.set(jobs.get() + w.jobs.len());
            common::sched_model::run_workload(&w)
        })
        .map_err(|e| e.to_string())?;
    let (cases, jobs) = (cases.get(), jobs.get());
    ensure!(cases == 1000, "ran {cases} workloads");
    Ok(format!("{cases} workloads, {jobs} items: no over-commit, no double release, all accepted items finished"))
}

fn domains() -> Check {
    let (f, tax, emb) = common::domain_fixture::load();
    ensure!(f.threshold == 0.5, "fixture threshold {}", f.threshold);
    for d in &tax.domains {
        let all = assign_domains(&d.definition, &tax, &emb, 0.5).unwrap();
        let me = all.iter().find(|s| s.domain_id == d.id);
        ensure!(me.is_some_and(|s| (s.score - 1.0).abs() <= 1e-12), "{} not self-similar", d.id);
    }
    let genomics = &tax.get("genomics").unwrap().definition;
    let zero = assign_domains(genomics, &tax, &emb, 0.0).unwrap();
    ensure!(zero.iter().any(|s| s.domain_id == "climate" && s.score == 0.0), "genomics/climate not orthogonal");
    ensure!(
        assign_domains(genomics, &tax, &emb, 0.5).unwrap().iter().all(|s| s.domain_id != "climate"),
        "orthogonal domain assigned"
    );
    let mut n = 0;
    for t in &f.tools {
        for s in assign_domains(&t.description, &tax, &emb, 0.0).unwrap() {
            let (formula, want) = &t.scores[&s.domain_id];
            ensure!((s.score - want).abs() <= 1e-12, "{}/{}: {} vs {formula}", t.name, s.domain_id, s.score);
            n += 1;
        }
        let got: BTreeSet<String> =
            assign_domains(&t.description, &tax, &emb, f.threshold).unwrap().into_iter().map(|d| d.domain_id).collect();
        ensure!(got == t.assigned.iter().cloned().collect(), "{} assigned {got:?}", t.name);
    }

    let tmp = tempfile::tempdir().unwrap();
    let mut reg = Registry::open(&tmp.path().join("registry.jsonl")).unwrap();
    let spec = BuildSpec {
        base_image: ImageRef::new("python", "3.11-slim"),
        system_packages: vec![],
        env_vars: vec![],
        copy_source: true,
        workdir: "/app".into(),
        build_steps: vec![],
        entrypoint: vec!["python".into(), "main.py".into()],
        validate_cmd: vec!["python".into(), "main.py".into(), "--help".into()],
    };
    for t in f.tools.iter().filter(|t| !t.assigned.is_empty()) {
        let rec = common::domain_fixture::record(&format!("{}@000000000000", t.name));
        let r = Registration {
            record: &rec,
            spec: &spec,
            image_digest: "sha256:0",
            name: &t.name,
            description: &t.description,
            tags: &[],
            registered_at: rec.ended_at,
        };
        reg.register(&r, &tax, &emb, f.threshold).unwrap();
    }
    let summed: u64 = reg.domain_counts().values().sum();
    ensure!(summed > reg.len() as u64, "summed {summed} vs unique {}", reg.len());
    Ok(format!("{n} scores within 1e-12, summed domain counts {summed} > {} tools", reg.len()))
}

fn spec_roundtrip() -> Check {
    let mut runner = TestRunner::deterministic();
    let strategy = common::spec_gen::spec();
    let mut by_digest: BTreeMap<String, String> = BTreeMap::new();
    for i in 0..100 {
        let s = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let text = s.render();
        let back = BuildSpec::parse(&text).map_err(|e| format!("case {i}: {e}"))?;
        ensure!(back == s, "case {i}: parse(render(spec)) differs");
        if let Some(prev) = by_digest.insert(s.digest(), text.clone()) {
            ensure!(prev == text, "case {i}: digest collision between different renderings");
        }
    }
    Ok(format!("100 specs round-trip, {} distinct digests", by_digest.len()))
}

fn long_tail() -> Check {
    let recs = SyntheticTrace { attempts: 8_000, successes: 7_600, median_duration_s: 480.0, seed: 11, ..Default::default() }
        .generate();
    let d: Vec<f64> = recs.iter().map(|r| r.build_duration_s).collect();
    let s = summarize(&recs, 5, Exec::Parallel).unwrap();
    let p = &s.durations;
    ensure!(p.p50 == 480.0, "median {}", p.p50);
    for (name, got, q) in [("p50", p.p50, 50), ("p90", p.p90, 90), ("p99", p.p99, 99), ("max", p.max, 100)] {
        let want = sort_oracle(&d, q);
        ensure!(got == want, "{name} {got} vs sort oracle {want}");
    }
    ensure!(p.p99 >= 10.0 * p.p50, "p99 {} < 10 x median", p.p99);

    let budget = Budget { cpu_slots: 64, memory_bytes: 1 << 40, long_tail_slots: 2, queue_cap: 100_000 };
    let mut sched = Scheduler::new(budget).unwrap();
    let mut settled = None;
    let (mut tail, mut flagged, mut short_flagged) = (0, 0, 0);
    for (i, r) in recs.iter().enumerate() {
        let cost = Cost { cpu_slots: 1, memory_bytes: 1 << 30, expected_duration_s: r.build_duration_s };
        sched.submit(WorkItem::new(format!("w{i}"), cost)).unwrap();
        let disp = sched.next_dispatch().unwrap();
        if settled.is_none() && i >= 100 && sched.median_duration().is_some_and(|m| (m - 480.0).abs() < 48.0) {
            settled = Some(i);
        }
        if settled.is_some() {
            if r.build_duration_s >= 10.0 * 480.0 {
                tail += 1;
                flagged += usize::from(disp.long_tail);
            }
            if r.build_duration_s <= 480.0 {
                short_flagged += usize::from(disp.long_tail);
            }
        }
        sched.complete(&disp.item.id, Completion::success(r.build_duration_s)).unwrap();
    }
    let settled = settled.ok_or("running median never settled")?;
    ensure!(tail > 0 && flagged == tail, "{flagged}/{tail} tail items flagged");
    ensure!(short_flagged == 0, "{short_flagged} short items flagged");
    Ok(format!(
        "p50 {} p90 {} p99 {} match oracle; median settled after {settled}; {flagged}/{tail} tail items long_tail",
        p.p50, p.p90, p.p99
    ))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "aggregate reproduction", limit: Duration::from_secs(5), check: aggregate },
        Criterion { name: "funnel oracle equivalence", limit: Duration::from_secs(1), check: funnel },
        Criterion { name: "end-to-end golden run", limit: Duration::from_secs(10), check: golden_run },
        Criterion { name: "review loop uplift", limit: Duration::from_secs(5), check: uplift },
        Criterion { name: "failure classifier agreement", limit: Duration::from_secs(1), check: classifier },
        Criterion { name: "scheduler safety", limit: Duration::from_secs(30), check: scheduler },
        Criterion { name: "domain assignment threshold", limit: Duration::from_secs(1), check: domains },
        Criterion { name: "recipe round-trip", limit: Duration::from_secs(1), check: spec_roundtrip },
        Criterion { name: "long-tail durations", limit: Duration::from_secs(5), check: long_tail },
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|f| !c.name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let el = t.elapsed();
        let res = match res {
            Ok(detail) if el > c.limit => Err(format!("{detail}; took {el:.2?}, limit {:?}", c.limit)),
            r => r,
        };
        match res {
            Ok(detail) => println!("PASS {} {:<30} {:>8.3}s  {detail}", i + 1, c.name, el.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {:<30} {:>8.3}s  {why}", i + 1, c.name, el.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

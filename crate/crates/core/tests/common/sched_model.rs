//! Independent budget model driven by randomized workloads.

use std::collections::{BTreeMap, BTreeSet};

use deployforge_core::executor::FailureCategory;
use deployforge_core::scheduler::{Budget, Completion, Cost, PriorityClass, SchedError, Scheduler, WorkItem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const UNIT: u64 = 1 << 28;

#[derive(Debug, Clone)]
pub struct Job {
    pub cpu: u32,
    pub mem: u64,
    pub expected: f64,
    pub long_tail: bool,
    /// 0 success, 1 ordinary failure, 2 resource failure once, 3 resource failure twice
    pub fate: u8,
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub budget: Budget,
    pub jobs: Vec<Job>,
    pub seed: u64,
}

pub fn workload() -> impl Strategy<Value = Workload> {
    let budget = (1u32..16, 1u64..64, 1u32..4, 3usize..40).prop_map(|(c, m, l, q)| Budget {
        cpu_slots: c,
        memory_bytes: m * UNIT,
        long_tail_slots: l,
        queue_cap: q,
    });
    let job = (1u32..20, 1u64..80, 1.0f64..20_000.0, prop::bool::weighted(0.15), 0u8..4)
        .prop_map(|(cpu, mem, expected, long_tail, fate)| Job { cpu, mem: mem * UNIT, expected, long_tail, fate });
    (budget, prop::collection::vec(job, 0..60), any::<u64>()).prop_map(|(budget, jobs, seed)| Workload { budget, jobs, seed })
}

#[derive(Default)]
pub struct Model {
    pub running: BTreeMap<String, (Cost, bool)>,
    pub finished: BTreeSet<String>,
    pub accepted: BTreeSet<String>,
    pub attempts: BTreeMap<String, u32>,
}

impl Model {
    fn check(&self, b: &Budget, s: &Scheduler) -> Result<(), TestCaseError> {
        let cpu: u32 = self.running.values().map(|(c, _)| c.cpu_slots).sum();
        let mem: u64 = self.running.values().map(|(c, _)| c.memory_bytes).sum();
        let lt = self.running.values().filter(|(_, l)| *l).count() as u32;
        prop_assert!(cpu <= b.cpu_slots, "cpu over-commit {cpu} > {}", b.cpu_slots);
        prop_assert!(mem <= b.memory_bytes, "memory over-commit");
        prop_assert!(lt <= b.long_tail_slots, "long-tail slots over-commit");
        let st = s.state();
        prop_assert_eq!((st.cpu_in_use, st.memory_in_use, st.long_tail_in_use), (cpu, mem, lt));
        Ok(())
    }
}

pub fn run_workload(w: &Workload) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let mut s = Scheduler::new(w.budget).unwrap();
    let mut m = Model::default();
    let mut pending: Vec<(String, &Job)> = w.jobs.iter().enumerate().map(|(i, j)| (format!("job-{i:03}"), j)).collect();
    pending.reverse();
    let fates: BTreeMap<String, &Job> = pending.iter().map(|(id, j)| (id.clone(), *j)).collect();

    let mut steps = 0;
    loop {
        steps += 1;
        prop_assert!(steps < 100_000, "no progress");
        let idle = pending.is_empty() && s.is_drained();
        if idle {
            break;
        }
        match rng.gen_range(0..4) {
            0 if !pending.is_empty() => {
                let (id, j) = pending.last().cloned().unwrap();
                let mut item = WorkItem::new(id.clone(), Cost { cpu_slots: j.cpu, memory_bytes: j.mem, expected_duration_s: j.expected });
                if j.long_tail {
                    item.class = PriorityClass::LongTail;
                }
                match s.submit(item) {
                    Ok(_) => {
                        pending.pop();
                        m.accepted.insert(id);
                    }
                    Err(SchedError::QueueFull { .. }) => prop_assert!(s.queue_len() >= w.budget.queue_cap),
                    Err(SchedError::InvalidItem { .. }) => {
                        prop_assert!(j.cpu > w.budget.cpu_slots || j.mem > w.budget.memory_bytes);
                        pending.pop();
                    }
                    Err(e) => prop_assert!(false, "unexpected {e}"),
                }
            }
            1 => {
                if let Some(d) = s.next_dispatch() {
                    prop_assert!(!m.running.contains_key(&d.item.id), "dispatched twice");
                    prop_assert!(!m.finished.contains(&d.item.id), "dispatched after finishing");
                    prop_assert!(!d.long_tail || s.state().long_tail_in_use <= w.budget.long_tail_slots);
                    if d.item.class == PriorityClass::LongTail {
                        prop_assert!(d.long_tail);
                    }
                    m.running.insert(d.item.id.clone(), (d.item.cost, d.long_tail));
                } else if m.running.is_empty() {
                    // Nothing running: everything queued must fit an empty budget.
                    prop_assert_eq!(s.queue_len(), 0, "queue stuck with an idle budget");
                }
            }
            2 if !m.running.is_empty() => {
                let k = rng.gen_range(0..m.running.len());
                let id = m.running.keys().nth(k).unwrap().clone();
                let n = m.attempts.entry(id.clone()).or_insert(0);
                *n += 1;
                let fate = fates[&id].fate;
                let done = match (fate, *n) {
                    (0, _) => Completion::success(10.0),
                    (1, _) => Completion::failure(FailureCategory::BuildProcess, 10.0),
                    (2, 1) | (3, _) => Completion::failure(FailureCategory::Resource, 10.0),
                    _ => Completion::success(10.0),
                };
                let (cost, _) = m.running.remove(&id).unwrap();
                let out = s.complete(&id, done).unwrap();
                match out.retry {
                    Some(r) => {
                        prop_assert_eq!(*n, 1, "second retry");
                        prop_assert_eq!(r.class, PriorityClass::Retry);
                        prop_assert_eq!(r.cost.memory_bytes, (cost.memory_bytes * 2).min(w.budget.memory_bytes));
                    }
                    None => {
                        m.finished.insert(id);
                    }
                }
            }
            3 if !m.finished.is_empty() => {
                // Releasing an already released item must be refused without touching the budget.
                let before = s.state();
                let k = rng.gen_range(0..m.finished.len());
                let id = m.finished.iter().nth(k).unwrap().clone();
                prop_assert!(matches!(s.complete(&id, Completion::success(1.0)), Err(SchedError::Contract(_))));
                prop_assert_eq!(s.state(), before);
            }
            _ => {}
        }
        m.check(&w.budget, &s)?;
    }
    prop_assert_eq!(&m.finished, &m.accepted, "accepted items left unfinished");
    prop_assert!(s.state().is_idle());
    Ok(())
}

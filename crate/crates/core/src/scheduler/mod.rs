//! Budgeted dispatch of build attempts with an isolated pool for long-tail
//! builds.
//!
//! [`Scheduler`] is the single-threaded arbiter; [`SharedScheduler`] wraps it
//! for use from several worker threads.

mod median;
mod shared;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{FailureCategory, Outcome};

pub use median::RunningMedian;
pub use shared::SharedScheduler;

pub const LONG_TAIL_FLOOR_S: f64 = 1800.0;
pub const LONG_TAIL_MULTIPLIER: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cost {
    pub cpu_slots: u32,
    pub memory_bytes: u64,
    pub expected_duration_s: f64,
}

impl Cost {
    pub fn is_positive(&self) -> bool {
        self.cpu_slots > 0 && self.memory_bytes > 0 && self.expected_duration_s > 0.0
    }
}

/// Dispatch priority, highest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityClass {
    Retry,
    Normal,
    LongTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub id: String,
    pub cost: Cost,
    pub class: PriorityClass,
    pub enqueue_time: f64,
}

impl WorkItem {
    pub fn new(id: impl Into<String>, cost: Cost) -> Self {
        WorkItem { id: id.into(), cost, class: PriorityClass::Normal, enqueue_time: 0.0 }
    }
}

/// Budget file contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub cpu_slots: u32,
    pub memory_bytes: u64,
    pub long_tail_slots: u32,
    pub queue_cap: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { cpu_slots: 8, memory_bytes: 32 << 30, long_tail_slots: 1, queue_cap: 10_000 }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<(), SchedError> {
        if self.cpu_slots == 0 || self.memory_bytes == 0 || self.long_tail_slots == 0 || self.queue_cap == 0 {
            return Err(SchedError::InvalidBudget(
                "cpu_slots, memory_bytes, long_tail_slots and queue_cap must all be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetState {
    pub total_cpu_slots: u32,
    pub total_memory_bytes: u64,
    pub cpu_in_use: u32,
    pub memory_in_use: u64,
    pub long_tail_slots: u32,
    pub long_tail_in_use: u32,
}

impl BudgetState {
    fn fits(&self, cost: &Cost, long_tail: bool) -> bool {
        self.cpu_in_use + cost.cpu_slots <= self.total_cpu_slots
            && self.memory_in_use + cost.memory_bytes <= self.total_memory_bytes
            && (!long_tail || self.long_tail_in_use < self.long_tail_slots)
    }

    pub fn within_limits(&self) -> bool {
        self.cpu_in_use <= self.total_cpu_slots
            && self.memory_in_use <= self.total_memory_bytes
            && self.long_tail_in_use <= self.long_tail_slots
    }

    pub fn is_idle(&self) -> bool {
        self.cpu_in_use == 0 && self.memory_in_use == 0 && self.long_tail_in_use == 0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedError {
    #[error("queue full ({cap} items); retry later")]
    QueueFull { cap: usize },
    #[error("invalid work item {id}: {msg}")]
    InvalidItem { id: String, msg: String },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// How a dispatched item finished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub outcome: Outcome,
    pub failure_category: Option<FailureCategory>,
    pub duration_s: f64,
}

impl Completion {
    pub fn success(duration_s: f64) -> Self {
        Completion { outcome: Outcome::Success, failure_category: None, duration_s }
    }

    pub fn failure(category: FailureCategory, duration_s: f64) -> Self {
        Completion { outcome: Outcome::Failure, failure_category: Some(category), duration_s }
    }
}

/// An item handed to a worker.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatched {
    pub item: WorkItem,
    /// Whether the item holds one of the long-tail slots.
    pub long_tail: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompleteOutcome {
    pub state: BudgetState,
    /// Retry enqueued in response to a resource failure.
    pub retry: Option<WorkItem>,
}

#[derive(Debug, Clone)]
struct Queued {
    seq: u64,
    item: WorkItem,
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    budget: Budget,
    state: BudgetState,
    queue: Vec<Queued>,
    next_seq: u64,
    running: BTreeMap<String, Dispatched>,
    retried: BTreeSet<String>,
    durations: RunningMedian,
    long_tail_dispatches: u64,
}

impl Scheduler {
    pub fn new(budget: Budget) -> Result<Self, SchedError> {
        budget.validate()?;
        Ok(Scheduler {
            budget,
            state: BudgetState {
                total_cpu_slots: budget.cpu_slots,
                total_memory_bytes: budget.memory_bytes,
                cpu_in_use: 0,
                memory_in_use: 0,
                long_tail_slots: budget.long_tail_slots,
                long_tail_in_use: 0,
            },
            queue: Vec::new(),
            next_seq: 0,
            running: BTreeMap::new(),
            retried: BTreeSet::new(),
            durations: RunningMedian::default(),
            long_tail_dispatches: 0,
        })
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn state(&self) -> BudgetState {
        self.state
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn running_len(&self) -> usize {
        self.running.len()
    }

    pub fn is_drained(&self) -> bool {
        self.queue.is_empty() && self.running.is_empty()
    }

    pub fn completed_count(&self) -> usize {
        self.durations.len()
    }

    pub fn long_tail_dispatches(&self) -> u64 {
        self.long_tail_dispatches
    }

    /// Median of completed durations (lower median for even counts).
    pub fn median_duration(&self) -> Option<f64> {
        self.durations.median()
    }

    /// Expected durations above this are long-tail.
    pub fn long_tail_threshold(&self) -> f64 {
        match self.durations.median() {
            Some(m) => (LONG_TAIL_MULTIPLIER * m).max(LONG_TAIL_FLOOR_S),
            None => LONG_TAIL_FLOOR_S,
        }
    }

    pub fn is_long_tail(&self, item: &WorkItem) -> bool {
        item.class == PriorityClass::LongTail || item.cost.expected_duration_s > self.long_tail_threshold()
    }

    fn check_item(&self, item: &WorkItem) -> Result<(), SchedError> {
        let invalid = |msg: &str| SchedError::InvalidItem { id: item.id.clone(), msg: msg.into() };
        if !item.cost.is_positive() || !item.cost.expected_duration_s.is_finite() {
            return Err(invalid("estimated cost must be positive in every dimension"));
        }
        if item.cost.cpu_slots > self.budget.cpu_slots || item.cost.memory_bytes > self.budget.memory_bytes {
            return Err(invalid("estimated cost exceeds the total budget"));
        }
        if self.running.contains_key(&item.id) || self.queue.iter().any(|q| q.item.id == item.id) {
            return Err(invalid("id already queued or running"));
        }
        Ok(())
    }

    pub fn submit(&mut self, item: WorkItem) -> Result<usize, SchedError> {
        self.check_item(&item)?;
        if self.queue.len() >= self.budget.queue_cap {
            return Err(SchedError::QueueFull { cap: self.budget.queue_cap });
        }
        self.enqueue(item);
        Ok(self.queue.len())
    }

    fn enqueue(&mut self, item: WorkItem) {
        self.queue.push(Queued { seq: self.next_seq, item });
        self.next_seq += 1;
    }

    /// Rank used for dispatch order; normal items over the threshold drop to
    /// the long-tail class.
    fn rank(&self, item: &WorkItem, threshold: f64) -> PriorityClass {
        match item.class {
            PriorityClass::Normal if item.cost.expected_duration_s > threshold => PriorityClass::LongTail,
            c => c,
        }
    }

    /// Oldest item of the highest-priority class that fits the remaining
    /// budget, or `None`.
    pub fn next_dispatch(&mut self) -> Option<Dispatched> {
        let threshold = self.long_tail_threshold();
        let mut best: Option<(PriorityClass, u64, usize, bool)> = None;
        for (i, q) in self.queue.iter().enumerate() {
            let long = q.item.class == PriorityClass::LongTail || q.item.cost.expected_duration_s > threshold;
            if !self.state.fits(&q.item.cost, long) {
                continue;
            }
            let key = (self.rank(&q.item, threshold), q.seq);
            if best.map_or(true, |(c, s, _, _)| key < (c, s)) {
                best = Some((key.0, key.1, i, long));
            }
        }
        let (_, _, idx, long) = best?;
        let q = self.queue.remove(idx);
        self.state.cpu_in_use += q.item.cost.cpu_slots;
        self.state.memory_in_use += q.item.cost.memory_bytes;
        if long {
            self.state.long_tail_in_use += 1;
            self.long_tail_dispatches += 1;
        }
        debug_assert!(self.state.within_limits());
        let d = Dispatched { item: q.item, long_tail: long };
        self.running.insert(d.item.id.clone(), d.clone());
        Some(d)
    }

    /// Releases the item's budget exactly once and records its duration.
    pub fn complete(&mut self, id: &str, done: Completion) -> Result<CompleteOutcome, SchedError> {
        let Some(d) = self.running.remove(id) else {
            return Err(SchedError::Contract(format!("{id} is not running (never dispatched or already completed)")));
        };
        self.state.cpu_in_use -= d.item.cost.cpu_slots;
        self.state.memory_in_use -= d.item.cost.memory_bytes;
        if d.long_tail {
            self.state.long_tail_in_use -= 1;
        }
        if done.duration_s.is_finite() && done.duration_s >= 0.0 {
            self.durations.push(done.duration_s);
        }
        let mut retry = None;
        if done.outcome == Outcome::Failure
            && done.failure_category == Some(FailureCategory::Resource)
            && self.retried.insert(d.item.id.clone())
        {
            let mut item = d.item.clone();
            item.class = PriorityClass::Retry;
            item.cost.memory_bytes = item.cost.memory_bytes.saturating_mul(2).min(self.budget.memory_bytes);
            // Retries bypass the queue cap.
            self.enqueue(item.clone());
            retry = Some(item);
        }
        Ok(CompleteOutcome { state: self.state, retry })
    }

    pub fn was_retried(&self, id: &str) -> bool {
        self.retried.contains(id)
    }
}

/// Per-language cost estimates used before any build history exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostTable {
    pub default: Cost,
    #[serde(default)]
    pub languages: BTreeMap<String, Cost>,
}

impl Default for CostTable {
    fn default() -> Self {
        let gib = 1u64 << 30;
        let c = |cpu, mem_gib: u64, dur| Cost { cpu_slots: cpu, memory_bytes: mem_gib * gib, expected_duration_s: dur };
        let languages = [
            ("python", c(1, 2, 300.0)),
            ("r", c(1, 2, 600.0)),
            ("julia", c(1, 4, 600.0)),
            ("javascript", c(1, 2, 240.0)),
            ("typescript", c(1, 2, 300.0)),
            ("c", c(2, 2, 420.0)),
            ("c++", c(2, 4, 600.0)),
            ("fortran", c(2, 2, 480.0)),
            ("rust", c(2, 4, 720.0)),
            ("java", c(2, 4, 540.0)),
            ("go", c(1, 2, 300.0)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        CostTable { default: c(1, 2, 480.0), languages }
    }
}

impl CostTable {
    pub fn estimate(&self, language: &str) -> Cost {
        self.languages.get(&language.to_ascii_lowercase()).copied().unwrap_or(self.default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(cpu: u32, mem: u64, lt: u32, cap: usize) -> Budget {
        Budget { cpu_slots: cpu, memory_bytes: mem, long_tail_slots: lt, queue_cap: cap }
    }

    fn item(id: &str, cpu: u32, mem: u64, dur: f64) -> WorkItem {
        WorkItem::new(id, Cost { cpu_slots: cpu, memory_bytes: mem, expected_duration_s: dur })
    }

    #[test]
    fn submit_and_cap() {
        let mut s = Scheduler::new(budget(4, 100, 1, 2)).unwrap();
        assert_eq!(s.submit(item("a", 1, 10, 60.0)).unwrap(), 1);
        s.submit(item("b", 1, 10, 60.0)).unwrap();
        assert_eq!(s.submit(item("c", 1, 10, 60.0)), Err(SchedError::QueueFull { cap: 2 }));
        assert!(matches!(s.submit(item("d", 0, 10, 60.0)), Err(SchedError::InvalidItem { .. })));
    }

    #[test]
    fn dispatch_fits_and_releases() {
        let mut s = Scheduler::new(budget(4, 100, 1, 10)).unwrap();
        s.submit(item("a", 3, 50, 60.0)).unwrap();
        s.submit(item("b", 2, 10, 60.0)).unwrap();
        s.submit(item("c", 1, 10, 60.0)).unwrap();
        assert_eq!(s.next_dispatch().unwrap().item.id, "a");
        // b does not fit; c does.
        assert_eq!(s.next_dispatch().unwrap().item.id, "c");
        assert!(s.next_dispatch().is_none());
        let before = s.state();
        s.complete("a", Completion::success(60.0)).unwrap();
        assert_eq!(s.state().cpu_in_use, before.cpu_in_use - 3);
        assert!(s.complete("a", Completion::success(60.0)).is_err());
        assert!(s.complete("zzz", Completion::success(1.0)).is_err());
        assert_eq!(s.next_dispatch().unwrap().item.id, "b");
        s.complete("b", Completion::success(1.0)).unwrap();
        s.complete("c", Completion::success(1.0)).unwrap();
        assert!(s.state().is_idle());
    }

    #[test]
    fn long_tail_pool_isolated() {
        let mut s = Scheduler::new(budget(8, 100, 1, 10)).unwrap();
        s.submit(item("long1", 1, 10, 7200.0)).unwrap();
        s.submit(item("long2", 1, 10, 7200.0)).unwrap();
        let d = s.next_dispatch().unwrap();
        assert!(d.long_tail);
        assert!(s.next_dispatch().is_none(), "second long item must wait for the slot");
        s.submit(item("short", 1, 10, 60.0)).unwrap();
        assert_eq!(s.next_dispatch().unwrap().item.id, "short");
    }

    #[test]
    fn threshold_tracks_median() {
        let mut s = Scheduler::new(budget(8, 100, 1, 10)).unwrap();
        assert_eq!(s.long_tail_threshold(), LONG_TAIL_FLOOR_S);
        for (i, d) in [400.0, 500.0, 600.0].iter().enumerate() {
            let id = format!("x{i}");
            s.submit(item(&id, 1, 1, 1.0)).unwrap();
            s.next_dispatch().unwrap();
            s.complete(&id, Completion::success(*d)).unwrap();
        }
        assert_eq!(s.long_tail_threshold(), 3000.0);
    }

    #[test]
    fn resource_failure_retries_once_with_double_memory() {
        let mut s = Scheduler::new(budget(8, 100, 1, 1)).unwrap();
        s.submit(item("a", 1, 30, 60.0)).unwrap();
        s.next_dispatch().unwrap();
        let out = s.complete("a", Completion::failure(FailureCategory::Resource, 10.0)).unwrap();
        let r = out.retry.unwrap();
        assert_eq!(r.cost.memory_bytes, 60);
        assert_eq!(r.class, PriorityClass::Retry);
        let d = s.next_dispatch().unwrap();
        assert_eq!(d.item.cost.memory_bytes, 60);
        let out = s.complete("a", Completion::failure(FailureCategory::Resource, 10.0)).unwrap();
        assert!(out.retry.is_none());
        assert!(s.is_drained());

        s.submit(item("b", 1, 70, 60.0)).unwrap();
        s.next_dispatch().unwrap();
        let out = s.complete("b", Completion::failure(FailureCategory::Resource, 10.0)).unwrap();
        assert_eq!(out.retry.unwrap().cost.memory_bytes, 100);
    }

    #[test]
    fn retry_outranks_normal() {
        let mut s = Scheduler::new(budget(1, 100, 1, 10)).unwrap();
        s.submit(item("a", 1, 10, 60.0)).unwrap();
        s.next_dispatch().unwrap();
        s.submit(item("b", 1, 10, 60.0)).unwrap();
        s.complete("a", Completion::failure(FailureCategory::Resource, 1.0)).unwrap();
        assert_eq!(s.next_dispatch().unwrap().item.id, "a");
    }

    #[test]
    fn cost_table_lookup() {
        let t = CostTable::default();
        assert_eq!(t.estimate("Python"), t.languages["python"]);
        assert_eq!(t.estimate("cobol"), t.default);
    }
}

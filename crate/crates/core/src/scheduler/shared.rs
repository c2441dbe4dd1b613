use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use super::{Budget, BudgetState, CompleteOutcome, Completion, Dispatched, SchedError, Scheduler, WorkItem};

#[derive(Debug)]
struct Inner {
    sched: Scheduler,
    closed: bool,
}

/// Thread-safe handle around one [`Scheduler`]. Every operation takes the
/// same lock, so submissions, dispatches and completions are serialized.
#[derive(Debug, Clone)]
pub struct SharedScheduler {
    inner: Arc<(Mutex<Inner>, Condvar)>,
}

impl SharedScheduler {
    pub fn new(budget: Budget) -> Result<Self, SchedError> {
        Ok(SharedScheduler {
            inner: Arc::new((Mutex::new(Inner { sched: Scheduler::new(budget)?, closed: false }), Condvar::new())),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn submit(&self, item: WorkItem) -> Result<usize, SchedError> {
        let n = self.lock().sched.submit(item)?;
        self.inner.1.notify_all();
        Ok(n)
    }

    pub fn try_dispatch(&self) -> Option<Dispatched> {
        self.lock().sched.next_dispatch()
    }

    /// Blocks until an item can be dispatched. Returns `None` once the
    /// scheduler is closed and has nothing queued or running.
    pub fn dispatch(&self) -> Option<Dispatched> {
        let mut g = self.lock();
        loop {
            if let Some(d) = g.sched.next_dispatch() {
                return Some(d);
            }
            if g.closed && g.sched.queue_len() == 0 {
                return None;
            }
            if g.closed && g.sched.running_len() == 0 {
                // Queued items that can never fit would otherwise hang.
                return None;
            }
            g = self.inner.1.wait(g).unwrap_or_else(|p| p.into_inner());
        }
    }

    pub fn complete(&self, id: &str, done: Completion) -> Result<CompleteOutcome, SchedError> {
        let out = self.lock().sched.complete(id, done);
        self.inner.1.notify_all();
        out
    }

    /// No further submissions; workers exit once the queue drains.
    pub fn close(&self) {
        self.lock().closed = true;
        self.inner.1.notify_all();
    }

    pub fn state(&self) -> BudgetState {
        self.lock().sched.state()
    }

    pub fn snapshot(&self) -> Scheduler {
        self.lock().sched.clone()
    }
}

//! Randomized workloads against an independent budget model.

use std::time::Instant;

use deployforge_core::scheduler::{
    Budget, Completion, Cost, PriorityClass, SharedScheduler, WorkItem,
};
use proptest::prelude::*;

mod common;

use common::sched_model::{run_workload, workload, UNIT};


proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn budget_is_never_overcommitted(w in workload()) {
        run_workload(&w)?;
    }
}

#[test]
fn thousand_workloads_fit_the_time_budget() {
    let t = Instant::now();
    let mut runner = proptest::test_runner::TestRunner::new(proptest::test_runner::Config {
        cases: 1000,
        ..Default::default()
    });
    runner.run(&workload(), |w| run_workload(&w)).unwrap();
    assert!(t.elapsed().as_secs_f64() < 30.0, "{:?}", t.elapsed());
}

#[test]
fn shared_scheduler_under_threads() {
    let budget = Budget { cpu_slots: 6, memory_bytes: 12 * UNIT, long_tail_slots: 1, queue_cap: 1000 };
    let shared = SharedScheduler::new(budget).unwrap();
    for i in 0..300u32 {
        let cost = Cost { cpu_slots: 1 + i % 3, memory_bytes: (1 + u64::from(i % 5)) * UNIT, expected_duration_s: 100.0 };
        let mut item = WorkItem::new(format!("t{i}"), cost);
        if i % 17 == 0 {
            item.class = PriorityClass::LongTail;
        }
        shared.submit(item).unwrap();
    }
    shared.close();
    let done = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..8 {
            scope.spawn(|| {
                while let Some(d) = shared.dispatch() {
                    let st = shared.state();
                    assert!(st.within_limits(), "{st:?}");
                    std::thread::yield_now();
                    shared.complete(&d.item.id, Completion::success(1.0)).unwrap();
                    done.lock().unwrap().push(d.item.id);
                }
            });
        }
    });
    let mut done = done.into_inner().unwrap();
    done.sort();
    done.dedup();
    assert_eq!(done.len(), 300);
    assert!(shared.state().is_idle());
}

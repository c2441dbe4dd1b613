use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dur(f64);

impl Eq for Dur {}

impl PartialOrd for Dur {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dur {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Streaming nearest-rank median: for `n` values, the `ceil(n/2)`-th smallest.
#[derive(Debug, Clone, Default)]
pub struct RunningMedian {
    low: BinaryHeap<Dur>,
    high: BinaryHeap<Reverse<Dur>>,
}

impl RunningMedian {
    pub fn push(&mut self, x: f64) {
        match self.low.peek() {
            Some(top) if x > top.0 => self.high.push(Reverse(Dur(x))),
            _ => self.low.push(Dur(x)),
        }
        // Keep low.len() == ceil(n/2).
        if self.low.len() > self.high.len() + 1 {
            let v = self.low.pop().expect("non-empty");
            self.high.push(Reverse(v));
        } else if self.high.len() > self.low.len() {
            let Reverse(v) = self.high.pop().expect("non-empty");
            self.low.push(v);
        }
    }

    pub fn median(&self) -> Option<f64> {
        self.low.peek().map(|d| d.0)
    }

    pub fn len(&self) -> usize {
        self.low.len() + self.high.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_sorted_rank(xs in proptest::collection::vec(0.0f64..1e5, 1..200)) {
            let mut m = RunningMedian::default();
            for (i, x) in xs.iter().enumerate() {
                m.push(*x);
                let mut s = xs[..=i].to_vec();
                s.sort_by(f64::total_cmp);
                let k = (s.len() + 1) / 2;
                prop_assert_eq!(m.median(), Some(s[k - 1]));
            }
        }
    }
}

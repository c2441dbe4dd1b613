//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Exec::Parallel`] runs on the
//! rayon global pool. Without it, both variants run sequentially, so callers
//! never need their own `cfg` switches. Results are always returned in input
//! order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this build can actually run work in parallel.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Chunked map-reduce. `merge` must be associative; chunk boundaries
    /// differ between the two execution modes.
    pub fn map_reduce<T, A, M, R>(self, items: &[T], chunk: usize, map: M, merge: R, empty: A) -> A
    where
        T: Sync,
        A: Send + Clone + Sync,
        M: Fn(&[T]) -> A + Sync + Send,
        R: Fn(A, A) -> A + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return items
                .par_chunks(chunk)
                .map(&map)
                .reduce(|| empty.clone(), &merge);
        }
        items.chunks(chunk).map(map).fold(empty, merge)
    }
}

//! Fan-out of independent per-column work.

use alloc::vec::Vec;

/// Runs `f(0..n)` and returns the results in index order.
///
/// Implementations may evaluate the closures concurrently, but the output
/// order is always the index order so downstream reductions stay
/// deterministic.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Single-threaded executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

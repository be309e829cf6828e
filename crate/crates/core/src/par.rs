//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature disabled every call runs sequentially, so results are
//! identical either way; only wall time changes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly on the rayon pool. Output order is index order.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

pub fn map_slice<I, T, F>(exec: Execution, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_indices(exec, items.len(), |i| f(&items[i]))
}

/// Like [`map_slice`] but stops at the first error (in index order).
pub fn try_map_slice<I, T, E, F>(exec: Execution, items: &[I], f: F) -> Result<Vec<T>, E>
where
    I: Sync,
    T: Send,
    E: Send,
    F: Fn(&I) -> Result<T, E> + Sync + Send,
{
    map_slice(exec, items, f).into_iter().collect()
}

//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] maps
//! over rayon's pool; without it, or with [`Execution::Sequential`], the
//! same closures run in order on the calling thread. Results are always
//! returned in index order so output does not depend on the mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when more than one worker is requested.
    pub fn for_workers(workers: usize) -> Self {
        if workers > 1 {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Self::Parallel
    }
}

/// `(0..n).map(f).collect()` in index order.
pub fn map_range<T, F>(mode: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()` in order.
pub fn map_slice<I, T, F>(mode: Execution, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Smallest index in `0..n` for which `f` returns `Some`, with its value.
///
/// The parallel path evaluates chunks concurrently but still reports the
/// lowest matching index, so the answer matches the sequential scan.
pub fn find_first<T, F>(mode: Execution, n: usize, f: F) -> Option<(usize, T)>
where
    T: Send,
    F: Fn(usize) -> Option<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n)
            .into_par_iter()
            .filter_map(|i| f(i).map(|v| (i, v)))
            .min_by_key(|(i, _)| *i);
    }
    let _ = mode;
    (0..n).find_map(|i| f(i).map(|v| (i, v)))
}

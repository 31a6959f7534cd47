//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the batch helpers run on the rayon
//! global pool. Without it, [`Execution::Parallel`] quietly degrades to the
//! sequential path so callers never need their own `cfg` switches. Results are
//! always returned in input order, so both modes produce identical output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// First index in `0..n` (lowest) for which `pred` holds.
pub fn find_first<F>(exec: Execution, n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().find_first(|&i| pred(i));
    }
    let _ = exec;
    (0..n).find(|&i| pred(i))
}

/// Runs `f` on every mutable row of `rows`.
pub fn for_each_mut<T, F>(exec: Execution, rows: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        rows.par_iter_mut().enumerate().for_each(|(i, r)| f(i, r));
        return;
    }
    let _ = exec;
    rows.iter_mut().enumerate().for_each(|(i, r)| f(i, r));
}

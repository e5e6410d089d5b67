//! Order-preserving map used by every corpus-level stage.
//!
//! With the `parallel` feature (default) work is spread over the current
//! rayon pool; without it the same calls run on the calling thread. Output
//! order always equals input order, so results are byte-identical across
//! thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, keeping input order.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    sequential_map(items, f)
}

/// Single-threaded reference path, always available.
pub fn sequential_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Runs `op` on a dedicated pool of `threads` workers. Without the
/// `parallel` feature the thread count is ignored.
#[cfg(feature = "parallel")]
pub fn with_threads<R, F>(threads: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R, F>(_threads: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    op()
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

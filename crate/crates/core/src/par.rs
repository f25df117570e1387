//! Data-parallel helpers.
//!
//! Every batch loop in the crate (per-graph statistics, per-example gradients,
//! per-graph generation) goes through [`map_indexed`]. With the `parallel`
//! feature the work is spread over the rayon pool; without it, or with
//! [`Execution::Sequential`], it runs on the calling thread. Results always come
//! back in input order, so reductions performed by callers are order-fixed and
//! identical between the two modes.

/// How a batch of independent jobs is executed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing when the `parallel` feature is on, sequential otherwise.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f` to every index in `0..len` and collects the results in order.
pub fn map_indexed<R, F>(exec: Execution, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Applies `f` to every element of `items`, preserving order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_indexed(exec, items.len(), |i| f(&items[i]))
}

/// Runs `f` inside a pool with the requested number of worker threads.
///
/// `None` uses the global pool. Without the `parallel` feature the worker count
/// is ignored.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(count) = workers {
        match rayon::ThreadPoolBuilder::new().num_threads(count.max(1)).build() {
            Ok(pool) => return pool.install(f),
            Err(err) => log::warn!("could not build a {count}-thread pool ({err}); using the global pool"),
        }
    }
    let _ = workers;
    f()
}

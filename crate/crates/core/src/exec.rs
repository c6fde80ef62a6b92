//! Chunked map with an optional rayon backend.
//!
//! Results always come back in input order, so any reduction the caller runs
//! over them is identical whichever backend produced them.

/// Where per-chunk work runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon's global pool. Without the `parallel` feature this runs sequentially.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Apply `f` to consecutive chunks of `items`, returning results in chunk order.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items
                .par_chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i * chunk, c))
                .collect()
        }
        _ => items
            .chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect(),
    }
}

/// Apply `f` to every item, in parallel when available, preserving order.
pub fn map_items<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

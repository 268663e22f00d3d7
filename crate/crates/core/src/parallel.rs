//! Ordered data-parallel map used by the sweep runner and the Monte Carlo
//! oracle.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool of
//! the requested size. Without it, or with `workers <= 1`, items are
//! processed sequentially. Results always come back in input order, so any
//! reduction done afterwards is independent of the worker count.

/// Applies `f` to every item and returns the results in input order.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    parallel_map(items, workers, f)
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        // thread spawning can fail in restricted sandboxes
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Whether this build can actually run work concurrently.
pub const fn is_parallel_build() -> bool {
    cfg!(feature = "parallel")
}

/// Default worker count: the number of available cores.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let items: Vec<u64> = (0..257).collect();
        let expected: Vec<u64> = items.iter().map(|x| x * x + 1).collect();
        for workers in [0, 1, 2, 3, 8] {
            assert_eq!(map_ordered(&items, workers, |x| x * x + 1), expected);
        }
    }

    #[test]
    fn empty_input() {
        let items: Vec<i32> = Vec::new();
        assert!(map_ordered(&items, 4, |x| *x).is_empty());
    }
}

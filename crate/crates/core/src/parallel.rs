//! Replicate-parallel map with results in index order.
//!
//! With the `parallel` feature and more than one worker the map runs on a
//! dedicated rayon pool; otherwise it is a plain loop. Both paths return the
//! same vector, so downstream aggregation is independent of the worker count.

/// `f(state, i)` for `i in 0..n`, with one `init()` state per worker.
pub fn map_indexed<S, T, I, F>(n: usize, workers: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        return pool.install(|| (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).collect());
    }
    let _ = workers;
    let mut state = init();
    (0..n).map(|i| f(&mut state, i)).collect()
}

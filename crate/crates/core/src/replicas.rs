//! Deterministic parallel replicas.
//!
//! Replica `i` of a run with seed `s` always sees the environment keyed by
//! `replica_seed(s, i)`, and results come back ordered by replica id, so
//! aggregates do not depend on the number of workers.

use rayon::prelude::*;

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "DSF_WORKERS";

/// Worker count from the environment, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs `f(0..n)` on `workers` threads and returns the results in id order.
pub fn run_replicas_with<T, F>(n: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// [`run_replicas_with`] using [`default_workers`].
pub fn run_replicas<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    run_replicas_with(n, default_workers(), f)
}

//! Data-parallel helpers with a sequential fallback.
//!
//! Everything in the crate that fans out over independent work items
//! (per-class solves, grid points, k-means restarts, test instances) goes
//! through [`map_indexed`]. With the `parallel` feature (default) the work
//! runs on the current rayon thread pool; without it the same closure runs
//! sequentially. Results are collected in index order either way, so output
//! never depends on thread count.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential twin of [`map_indexed`], kept for benchmark baselines.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

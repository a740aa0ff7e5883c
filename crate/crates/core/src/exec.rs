//! Index-parallel execution helpers.
//!
//! Everything that fans out over independent work items (channel
//! realizations, Monte-Carlo sample chunks, gradient rows) goes through
//! [`map_indexed`]. With the `parallel` feature (default) it dispatches to
//! rayon; without it the same closure runs sequentially. Results come back
//! in index order either way, and every caller owns one RNG substream per
//! index, so the two modes produce bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every index in `0..n` and collects results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Sequential fallback with the same signature and ordering guarantees.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Name of the compiled execution mode, used to label benchmark groups.
pub fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

//! Sequential / parallel execution of chunked work.
//!
//! Tuple enumeration is split into fixed-size chunks and the per-chunk
//! results are folded in chunk order. Sequential and parallel modes run the
//! same chunk tree, so they produce bitwise-identical numbers; parallelism
//! only changes who computes each chunk.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputeMode {
    Sequential,
    /// Uses the current rayon thread pool. Falls back to sequential when the
    /// crate is built without the `parallel` feature.
    Parallel,
}

impl Default for ComputeMode {
    fn default() -> Self {
        ComputeMode::Sequential
    }
}

/// Tuples per chunk. Fixed so that chunk boundaries (and therefore the
/// summation tree) do not depend on thread count.
pub(crate) const CHUNK_TUPLES: u128 = 8192;

/// Runs `work` for chunk indices 0..chunks and returns the results in chunk
/// order.
pub(crate) fn run_chunks<R, F>(chunks: usize, mode: ComputeMode, work: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    match mode {
        ComputeMode::Sequential => (0..chunks).map(work).collect(),
        ComputeMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..chunks).into_par_iter().map(work).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..chunks).map(work).collect()
            }
        }
    }
}

//! Experiment drivers. Monte-Carlo work is pre-partitioned into fixed-size
//! chunks, each with its own derived stream, and chunk results are merged in
//! index order, so outputs do not depend on the parallelism degree.

pub mod flatness_scan;
pub mod leakage;
pub mod reliability;
pub mod resolvability;
pub mod tradeoff;
pub mod uniformity;

use rayon::prelude::*;

pub const CHUNK: u64 = 1024;

/// Splits `total` items into CHUNK-sized ranges and maps each range on the
/// thread pool; results come back in chunk order.
pub fn run_chunked<T, F>(total: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    run_chunked_with(total, CHUNK, f)
}

/// Same with an explicit chunk size, for work items that are individually
/// expensive. The chunk size is part of the stream assignment, so it is a
/// fixed constant per experiment, never derived from the thread count.
pub fn run_chunked_with<T, F>(total: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    let chunks = total.div_ceil(chunk);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = chunk.min(total - c * chunk);
            f(c, count)
        })
        .collect()
}

//! Internal parallelism control.
//!
//! `DISCOFACE_THREADS` caps the worker pool (default 1). Every parallel
//! region in the crate writes to disjoint output slices, so results are
//! bitwise identical for any thread count.

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

pub fn thread_count() -> usize {
    std::env::var("DISCOFACE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// The crate-wide worker pool, built once from `DISCOFACE_THREADS`.
pub fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .build()
            .expect("failed to build worker pool")
    })
}

/// Runs `f(i, chunk)` over equal-sized disjoint chunks of `out`, in parallel
/// when the pool has more than one thread. Chunk `i` covers
/// `out[i*chunk_len..(i+1)*chunk_len]`; `out.len()` must be divisible by
/// `chunk_len`.
pub fn for_each_chunk<F>(out: &mut [f32], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync,
{
    debug_assert!(chunk_len > 0 && out.len() % chunk_len == 0);
    if thread_count() <= 1 || out.len() / chunk_len <= 1 {
        for (i, chunk) in out.chunks_mut(chunk_len).enumerate() {
            f(i, chunk);
        }
    } else {
        use rayon::prelude::*;
        pool().install(|| {
            out.par_chunks_mut(chunk_len).enumerate().for_each(|(i, chunk)| f(i, chunk));
        });
    }
}

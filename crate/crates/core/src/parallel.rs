// SPDX-License-Identifier: Apache-2.0

//! Thread-count control. Kernels split work per sample and reduce in a fixed
//! order, so the thread count changes speed only, never results.

pub const THREADS_ENV: &str = "GSLAB_THREADS";

/// Thread cap from `GSLAB_THREADS`, defaulting to 1.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

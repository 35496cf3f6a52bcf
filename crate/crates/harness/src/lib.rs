//! Configuration, run artifacts, command drivers and the acceptance suite.

pub mod artifacts;
pub mod checks;
pub mod commands;
pub mod config;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "POLARON_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] when set.
pub fn init_threads() -> Result<usize, String> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?,
        Err(_) => 0,
    };
    if n > 0 {
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

//! Concurrency for oracle restarts and independent samples.
//!
//! `CARNOT_SF_THREADS` caps the size of the global worker pool. Results are
//! always collected in index order, so the thread count never changes outputs.

use std::sync::OnceLock;

use carnot_core::oracle::{reduce, OracleResult, TranscriptionProblem};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "CARNOT_SF_THREADS";

static POOL: OnceLock<usize> = OnceLock::new();

/// Builds the global pool once, honouring `CARNOT_SF_THREADS`; returns its size.
pub fn configure_threads() -> usize {
    *POOL.get_or_init(|| {
        let requested = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|n| *n > 0);
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = requested {
            builder = builder.num_threads(n);
        }
        // another pool may already be installed by an embedding program
        let _ = builder.build_global();
        rayon::current_num_threads()
    })
}

/// Runs the restarts of `problem` concurrently and keeps the best.
pub fn parallel_solver(problem: &TranscriptionProblem) -> carnot_core::Result<OracleResult> {
    configure_threads();
    let candidates = (0..problem.config.restarts)
        .into_par_iter()
        .map(|i| problem.solve_restart(i))
        .collect::<carnot_core::Result<Vec<_>>>()?;
    reduce(&problem.config, candidates)
}

/// Order-preserving parallel map.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    configure_threads();
    items.par_iter().map(f).collect()
}

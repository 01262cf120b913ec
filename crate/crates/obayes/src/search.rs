//! Parallel exhaustive follow-up search.
//!
//! The design space is cut into contiguous rank chunks scored on a rayon
//! pool. Chunk results are merged in chunk order under a total ranking
//! (score, then run numbers), so the outcome equals the serial search
//! exactly for any thread count.

use obayes_core::discrimination::{exhaustive_count, search_range, CandidateDesign, Discriminator, TopK};
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Environment variable capping the number of search threads.
pub const THREADS_ENV: &str = "OBAYES_THREADS";

const MIN_CHUNK: u64 = 2048;

/// Thread cap from the environment, if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Exhaustive search on `threads` workers (rayon's default when `None`).
pub fn parallel_search(
    disc: &Discriminator,
    n_star: usize,
    top_k: usize,
    max_designs: u64,
    threads: Option<usize>,
) -> Result<Vec<CandidateDesign>> {
    let total = exhaustive_count(disc.candidate_count(), n_star, max_designs)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start search threads: {e}")))?;
    let workers = pool.current_num_threads() as u64;
    let chunk = (total / (workers * 16)).max(MIN_CHUNK);
    let starts: Vec<u64> = (0..total).step_by(chunk as usize).collect();
    let parts: Vec<obayes_core::Result<TopK>> = pool.install(|| {
        starts
            .par_iter()
            .map(|&s| search_range(disc, n_star, s, (s + chunk).min(total), top_k))
            .collect()
    });
    let mut top = TopK::new(top_k);
    for part in parts {
        top.merge(part?);
    }
    Ok(top.into_vec())
}

//! Worker pools and the parallel multistart optimizer.

use mavdesign_core::optimizer::{finish, run_start, start_plan, StartOutcome};
use mavdesign_core::{MavProblem, OptimResult, OptimizerOptions};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MAVDESIGN_THREADS";

/// Worker count: the explicit value, else `MAVDESIGN_THREADS`, else the
/// available parallelism.
pub fn thread_count(explicit: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return if n == 0 {
            Err(Error::invalid("thread count must be positive"))
        } else {
            Ok(n)
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::invalid(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = thread_count(threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {n} worker threads: {e}")))
}

/// Multistart optimization with the starts run concurrently. The result does
/// not depend on the thread count: outcomes are collected in start order and
/// the winner is chosen by `(phi, start index)`.
pub fn optimize_parallel(
    problem: &MavProblem,
    opts: &OptimizerOptions,
    threads: Option<usize>,
) -> Result<OptimResult> {
    opts.validate()?;
    let plan = start_plan(problem.space(), opts.k_init, opts.n_starts, opts.rng_seed);
    let outcomes: Vec<StartOutcome> =
        pool(threads)?.install(|| plan.par_iter().map(|s| run_start(problem, s, opts)).collect());
    Ok(finish(problem, &outcomes, opts)?)
}

//! Multi-threaded SSA. Trajectories are cut into fixed chunks that do not
//! depend on the worker count, so the merged histogram is identical for any
//! number of threads.

use std::num::NonZeroUsize;

use occnum_core::ssa::{sample_range, SsaError};
use occnum_core::{EmpiricalDistribution, ModelSpec};
use rayon::prelude::*;

/// Trajectories per work item.
pub const CHUNK: u64 = 1024;

/// Environment variable capping the number of sampling threads.
pub const THREADS_ENV: &str = "OCCNUM_THREADS";

/// Available parallelism, capped by `OCCNUM_THREADS` when it parses as a
/// positive integer.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, NonZeroUsize::get);
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(n) if n >= 1 => n.min(available),
        _ => available,
    }
}

pub fn sample_parallel(
    spec: &ModelSpec,
    init: &[u64],
    t: f64,
    count: u64,
    seed: u64,
    workers: usize,
) -> Result<EmpiricalDistribution, SsaError> {
    if count == 0 {
        return Err(SsaError::NoTrajectories);
    }
    let chunks: Vec<u64> = (0..count.div_ceil(CHUNK)).collect();
    let run = || {
        chunks
            .par_iter()
            .map(|&c| sample_range(spec, init, t, c * CHUNK..((c + 1) * CHUNK).min(count), seed))
            .collect::<Result<Vec<_>, _>>()
    };
    let parts = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(run)?,
        Err(_) => run()?,
    };
    let mut total = EmpiricalDistribution::new(spec.mode_count(), seed);
    for part in parts {
        total.merge(part)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use occnum_core::{builtin_model, sample_trajectories};

    #[test]
    fn matches_sequential_run() {
        let spec = builtin_model("cannibal", &[1.0, 0.7]).unwrap();
        let seq = sample_trajectories(&spec, &[3, 1], 0.8, 2500, 11).unwrap();
        for workers in [1, 3] {
            assert_eq!(sample_parallel(&spec, &[3, 1], 0.8, 2500, 11, workers).unwrap(), seq);
        }
    }

    #[test]
    fn zero_count_rejected() {
        let spec = builtin_model("lvm_truncated", &[]).unwrap();
        assert!(matches!(
            sample_parallel(&spec, &[1, 0], 1.0, 0, 0, 2),
            Err(SsaError::NoTrajectories)
        ));
    }
}

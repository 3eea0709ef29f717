//! Parallel pushforward histograms.

use partopt_core::empirical::{EmpiricalReport, HistogramJob, ShardResult};
use rayon::prelude::*;

/// Runs the shards of `job` in parallel and merges them by addition. Shard
/// results are independent of scheduling, so the report is deterministic.
pub fn histogram(job: &HistogramJob<'_>, workers: Option<usize>) -> anyhow::Result<EmpiricalReport> {
    job.validate()?;
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    let merged = b.build()?.install(|| {
        (0..job.shards())
            .into_par_iter()
            .map(|s| job.run_shard(s))
            .reduce(
                || ShardResult::empty(job.cells()),
                |mut a, b| {
                    a.merge(&b);
                    a
                },
            )
    });
    Ok(job.report(merged))
}

//! Parallel orchestration of a threshold run.
//!
//! Every parallel step computes items that depend only on `(seed, index)` and
//! collects them in index order, so output never depends on the worker count.

use std::path::PathBuf;

use anyhow::{bail, Context};
use partopt_core::canonical::{sample_cells, RankCell, SampleContext};
use partopt_core::corpus::{self, Expectation, RegisteredConfig};
use partopt_core::incidence::{
    pick_target, project_start, sample_tau, SampleBatch, SamplingHints, ATTEMPTS_PER_POINT,
};
use partopt_core::partitions::{enumerate_partitions, Partition};
use partopt_core::rng::{substream, Purpose};
use partopt_core::threshold::{compare_modes, threshold, CellGrid, ChartHint, OrderingRow, Status, ThresholdReport};
use partopt_core::{ConfigSpec, Error, Mode, Tolerances};
use rayon::prelude::*;

use crate::config_file;

/// Default incidence samples per run.
pub const DEFAULT_SAMPLES: usize = 128;
/// Default `τ` directions per unit of `p`.
pub const TAU_PER_P: usize = 64;
/// Runs with more marginal cells than this fraction are untrusted.
pub const UNTRUSTED_MARGINAL_FRACTION: f64 = 0.05;
/// Environment override for the worker count.
pub const WORKERS_ENV: &str = "PARTOPT_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigSource {
    Builtin(String),
    File(PathBuf),
}

impl ConfigSource {
    /// A registered name, otherwise a path.
    pub fn from_arg(s: &str) -> Self {
        if corpus::lookup(s).is_ok() {
            ConfigSource::Builtin(s.to_string())
        } else {
            ConfigSource::File(PathBuf::from(s))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: ConfigSource,
    /// Ambient dimension for registered configs; defaults to the smallest valid one.
    pub d: Option<usize>,
    pub modes: Vec<Mode>,
    pub samples: usize,
    /// Defaults to `64 p`.
    pub tau_samples: Option<usize>,
    pub seed: u64,
    /// Fixed target instead of a random admissible one.
    pub target: Option<Vec<f64>>,
    pub tol: Tolerances,
    /// `None` uses rayon's default.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn builtin(name: &str, d: usize) -> Self {
        Self {
            source: ConfigSource::Builtin(name.into()),
            d: Some(d),
            modes: Mode::ALL.to_vec(),
            samples: DEFAULT_SAMPLES,
            tau_samples: None,
            seed: 1,
            target: None,
            tol: Tolerances::default(),
            workers: None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.tol.validate()?;
        if self.samples == 0 {
            bail!("samples must be at least 1");
        }
        if self.tau_samples == Some(0) {
            bail!("tau samples must be at least 1");
        }
        if self.workers == Some(0) {
            bail!("worker count must be at least 1");
        }
        if self.modes.is_empty() {
            bail!("no modes requested");
        }
        Ok(())
    }
}

/// A configuration ready to run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ConfigSpec,
    pub d: Option<usize>,
    pub hints: SamplingHints,
    pub charts: Vec<ChartHint>,
    pub registered: Option<&'static RegisteredConfig>,
}

impl Resolved {
    pub fn builtin(cfg: &'static RegisteredConfig, d: Option<usize>) -> Result<Self, Error> {
        let d = d.unwrap_or_else(|| cfg.default_d());
        Ok(Self {
            spec: cfg.spec(d)?,
            d: Some(d),
            hints: cfg.hints(),
            charts: cfg.chart_hints(),
            registered: Some(cfg),
        })
    }

    pub fn from_spec(spec: ConfigSpec) -> Self {
        let charts = ChartHint::axes(spec.p());
        Self {
            d: spec.uniform_dim(),
            spec,
            hints: SamplingHints::default(),
            charts,
            registered: None,
        }
    }

    pub fn expected(&self, mode: Mode) -> Expectation {
        match (self.registered, self.d) {
            (Some(c), Some(d)) => c.expected(mode, d).unwrap_or(Expectation::Unregistered),
            _ => Expectation::Unregistered,
        }
    }
}

pub fn resolve(source: &ConfigSource, d: Option<usize>) -> anyhow::Result<Resolved> {
    match source {
        ConfigSource::Builtin(name) => Ok(Resolved::builtin(corpus::lookup(name)?, d)?),
        ConfigSource::File(path) => {
            let spec = config_file::load(path)?;
            if let (Some(d), Some(u)) = (d, spec.uniform_dim()) {
                if d != u {
                    bail!("--d {d} conflicts with the dimensions in {}", path.display());
                }
            }
            Ok(Resolved::from_spec(spec))
        }
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub resolved: Resolved,
    pub seed: u64,
    pub target: Vec<f64>,
    pub batch: SampleBatch,
    /// Samples dropped because `DΦ` had no clear kernel there.
    pub frame_failures: usize,
    pub grid: CellGrid,
    pub reports: Vec<ThresholdReport>,
    pub ordering: Result<Vec<OrderingRow>, Error>,
}

impl Analysis {
    pub fn marginal_fraction(&self) -> f64 {
        if self.grid.cells.is_empty() {
            0.0
        } else {
            self.grid.marginal_count() as f64 / self.grid.cells.len() as f64
        }
    }

    pub fn trusted(&self) -> bool {
        self.marginal_fraction() <= UNTRUSTED_MARGINAL_FRACTION
    }

    pub fn report(&self, mode: Mode) -> Option<&ThresholdReport> {
        self.reports.iter().find(|r| r.mode == mode)
    }

    /// Modes whose ok/vacuous status disagrees with the registry.
    pub fn status_mismatches(&self) -> Vec<Mode> {
        self.reports
            .iter()
            .filter(|r| match self.resolved.expected(r.mode) {
                Expectation::Unregistered => false,
                Expectation::Vacuous => r.status != Status::Vacuous,
                Expectation::Threshold(_) => r.status != Status::Ok,
            })
            .map(|r| r.mode)
            .collect()
    }
}

fn pool(workers: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().context("building worker pool")
}

/// Samples up to `n` incidence points, evaluating starts in parallel batches
/// and folding them in index order.
pub fn sample_parallel(
    spec: &ConfigSpec,
    t: &[f64],
    n: usize,
    seed: u64,
    hints: &SamplingHints,
    tol: &Tolerances,
) -> Result<SampleBatch, Error> {
    let max = ATTEMPTS_PER_POINT * n;
    let mut outcomes = Vec::with_capacity(max);
    let mut found = 0;
    let mut next = 0;
    while found < n && next < max {
        let end = (next + (n - found).max(8)).min(max);
        let chunk: Vec<_> = (next..end)
            .into_par_iter()
            .map(|i| project_start(spec, t, seed, i as u64, hints, tol))
            .collect();
        found += chunk.iter().filter(|o| o.is_ok()).count();
        outcomes.extend(chunk);
        next = end;
    }
    SampleBatch::from_outcomes(n, spec.p(), outcomes)
}

/// Picks the target and samples the incidence relation.
pub fn prepare(rc: &RunConfig, resolved: &Resolved) -> anyhow::Result<(Vec<f64>, SampleBatch)> {
    let spec = &resolved.spec;
    let target = match &rc.target {
        Some(t) => {
            if t.len() != spec.p() {
                bail!("target has {} entries but p = {}", t.len(), spec.p());
            }
            t.clone()
        }
        None => pick_target(spec, &mut substream(rc.seed, Purpose::Target, 0), &resolved.hints, &rc.tol)?,
    };
    let batch = sample_parallel(spec, &target, rc.samples, rc.seed, &resolved.hints, &rc.tol)?;
    Ok((target, batch))
}

pub fn taus(rc: &RunConfig, resolved: &Resolved) -> Vec<Vec<f64>> {
    let p = resolved.spec.p();
    let m = rc.tau_samples.unwrap_or(TAU_PER_P * p);
    sample_tau(p, m, &mut substream(rc.seed, Purpose::Tau, 0), true, &resolved.hints.tau_directions)
}

/// Builds the rank-cell grid over the feasible partitions.
pub fn build_grid(
    spec: &ConfigSpec,
    batch: &SampleBatch,
    taus: Vec<Vec<f64>>,
    tol: &Tolerances,
) -> (CellGrid, usize) {
    let partitions: Vec<Partition> = enumerate_partitions(spec).into_iter().filter(|s| s.feasible()).collect();
    let per_sample: Vec<Option<Vec<RankCell>>> = batch
        .points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            SampleContext::new(spec, i, pt, tol)
                .ok()
                .map(|ctx| sample_cells(spec, &ctx, &taus, &partitions, tol))
        })
        .collect();
    let failures = per_sample.iter().filter(|c| c.is_none()).count();
    let cells: Vec<RankCell> = per_sample.into_iter().flatten().flatten().collect();
    let grid = CellGrid::new(spec.k(), spec.p(), spec.uniform_dim().is_some(), partitions, taus, cells);
    (grid, failures)
}

/// Runs the whole pipeline for an already resolved configuration.
pub fn analyze_resolved(rc: &RunConfig, resolved: Resolved) -> anyhow::Result<Analysis> {
    rc.validate()?;
    let spec = resolved.spec.clone();
    pool(rc.workers)?.install(|| {
        let (target, batch) = prepare(rc, &resolved)?;
        if batch.points.is_empty() {
            bail!(
                "no incidence points found for t = {target:?} ({} starts: {:?})",
                batch.tally.attempts,
                batch.tally
            );
        }
        let (grid, frame_failures) = build_grid(&spec, &batch, taus(rc, &resolved), &rc.tol);
        let mut modes = rc.modes.clone();
        modes.sort();
        modes.dedup();
        let reports: Vec<ThresholdReport> = modes.iter().map(|&m| threshold(&grid, m, &resolved.charts)).collect();
        let ordering = compare_modes(&reports);
        Ok(Analysis {
            resolved,
            seed: rc.seed,
            target,
            batch,
            frame_failures,
            grid,
            reports,
            ordering,
        })
    })
}

pub fn analyze(rc: &RunConfig) -> anyhow::Result<Analysis> {
    let resolved = resolve(&rc.source, rc.d)?;
    analyze_resolved(rc, resolved)
}

/// Derivative check at `n` seeded incidence points.
pub fn derivative_check(
    resolved: &Resolved,
    n: usize,
    seed: u64,
    h: f64,
    tol: &Tolerances,
) -> anyhow::Result<Vec<partopt_core::expr::DerivativeReport>> {
    let spec = &resolved.spec;
    let t = pick_target(spec, &mut substream(seed, Purpose::Target, 0), &resolved.hints, tol)?;
    let batch = sample_parallel(spec, &t, n, seed, &resolved.hints, tol)?;
    Ok(batch
        .points
        .par_iter()
        .map(|pt| partopt_core::expr::validate_derivatives(spec, &pt.x, h))
        .collect())
}

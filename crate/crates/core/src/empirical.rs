//! Self-similar point sets and histograms of `Φ` pushed through product
//! samples of them.
//!
//! Occupancy is a diagnostic only. A finite sample cannot certify that the
//! configuration set has interior, nor that it lacks one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng as _;

use crate::expr::ConfigSpec;
use crate::rng::{substream, Purpose, Rng};
use crate::{Error, Result};

/// Tuples per shard. Each shard draws from its own substream.
pub const SHARD_SIZE: usize = 4096;
/// Default tuple count.
pub const DEFAULT_TUPLES: usize = 1_000_000;
/// Default grid resolution per axis.
pub const DEFAULT_RESOLUTION: usize = 64;
/// Histograms are only supported up to this many target dimensions.
pub const MAX_HIST_P: usize = 3;

/// Attractor of `m` similarities `x ↦ r x + offset_i` of the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct CantorSpec {
    pub d: usize,
    pub r: f64,
    /// Truncation depth of the digit expansion.
    pub depth: usize,
    /// One offset per branch, each in `[0, 1 − r]^d`.
    pub offsets: Vec<Vec<f64>>,
}

impl CantorSpec {
    pub fn new(d: usize, r: f64, depth: usize, offsets: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self { d, r, depth, offsets };
        s.validate()?;
        Ok(s)
    }

    /// Middle-thirds set on the first axis of `ℝ^d`.
    pub fn middle_thirds(d: usize, depth: usize) -> Result<Self> {
        let mut b = vec![0.0; d];
        if d > 0 {
            b[0] = 2.0 / 3.0;
        }
        Self::new(d, 1.0 / 3.0, depth, vec![vec![0.0; d], b])
    }

    /// Three thirds of `[0, 1]`; the limit set is the whole interval.
    pub fn full_interval(depth: usize) -> Result<Self> {
        Self::new(1, 1.0 / 3.0, depth, vec![vec![0.0], vec![1.0 / 3.0], vec![2.0 / 3.0]])
    }

    /// `base^d`: all combinations of the one-dimensional offsets of `base`.
    pub fn product(base: &CantorSpec, d: usize) -> Result<Self> {
        if base.d != 1 {
            return Err(Error::InvalidCantor(format!("product needs a 1-dimensional base, got d = {}", base.d)));
        }
        let mut offsets = vec![Vec::new()];
        for _ in 0..d {
            offsets = offsets
                .into_iter()
                .flat_map(|o: Vec<f64>| {
                    base.offsets.iter().map(move |b| {
                        let mut o = o.clone();
                        o.push(b[0]);
                        o
                    })
                })
                .collect();
        }
        Self::new(d, base.r, base.depth, offsets)
    }

    pub fn m(&self) -> usize {
        self.offsets.len()
    }

    /// `log m / log(1/r)`.
    pub fn similarity_dimension(&self) -> f64 {
        Float::ln(self.m() as f64) / Float::ln(1.0 / self.r)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidCantor(msg));
        let m = self.m();
        if self.d == 0 || m < 2 {
            return bad(format!("need d >= 1 and at least two branches, got d = {}, m = {m}", self.d));
        }
        if !(self.r > 0.0 && self.r <= 1.0 / m as f64) {
            return bad(format!("ratio r = {} must lie in (0, 1/m] with m = {m}", self.r));
        }
        if self.depth == 0 || self.depth as f64 * Float::ln(1.0 / self.r) > 700.0 {
            return bad(format!("depth {} underflows r^depth", self.depth));
        }
        for o in &self.offsets {
            if o.len() != self.d {
                return bad(format!("offset {o:?} is not in R^{}", self.d));
            }
            if o.iter().any(|&c| !(c >= 0.0 && c <= 1.0 - self.r + 1e-12)) {
                return bad(format!("offset {o:?} puts its child outside the unit cube"));
            }
        }
        // children r·[0,1]^d + o_i have disjoint interiors iff their offsets
        // are at least r apart in the sup norm
        for (i, a) in self.offsets.iter().enumerate() {
            for b in &self.offsets[i + 1..] {
                let sup = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                if sup < self.r - 1e-12 {
                    return bad(format!("children at {a:?} and {b:?} overlap"));
                }
            }
        }
        let s = self.similarity_dimension();
        if !(s > 0.0 && s <= self.d as f64 + 1e-12) {
            return bad(format!("similarity dimension {s} outside (0, {}]", self.d));
        }
        Ok(())
    }
}

/// `n` points `Σ_j r^j · offset[digit_j]` with i.i.d. uniform digits, i.e.
/// samples of the natural self-similar measure.
pub fn generate_cantor(spec: &CantorSpec, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let m = spec.m();
    (0..n)
        .map(|_| {
            let mut x = vec![0.0; spec.d];
            let mut scale = 1.0;
            for _ in 0..spec.depth {
                let o = &spec.offsets[rng.random_range(0..m)];
                x.iter_mut().zip(o).for_each(|(xi, oi)| *xi += scale * oi);
                scale *= spec.r;
            }
            x
        })
        .collect()
}

/// `n` points uniform in `[0, 1]^d`.
pub fn uniform_pool(d: usize, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Axis-aligned box in `ℝ^p`, `p ≤ 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HistBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > MAX_HIST_P {
            return Err(Error::InvalidBox(format!(
                "bounds must have equal length between 1 and {MAX_HIST_P}, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::InvalidBox(format!("need finite lo < hi, got {lo:?} and {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// The same interval on each of `p` axes.
    pub fn cube(p: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; p], vec![hi; p])
    }

    pub fn p(&self) -> usize {
        self.lo.len()
    }

    /// Row-major cell index of `t`, or `None` outside the closed box.
    pub fn bin(&self, t: &[f64], resolution: usize) -> Option<usize> {
        let mut idx = 0;
        for ((&v, &lo), &hi) in t.iter().zip(&self.lo).zip(&self.hi) {
            if !(v >= lo && v <= hi) {
                return None;
            }
            let c = (((v - lo) / (hi - lo)) * resolution as f64) as usize;
            idx = idx * resolution + c.min(resolution - 1);
        }
        Some(idx)
    }

    /// Center of cell `idx`.
    pub fn cell_center(&self, idx: usize, resolution: usize) -> Vec<f64> {
        let p = self.p();
        let mut c = vec![0.0; p];
        let mut rest = idx;
        for a in (0..p).rev() {
            let i = rest % resolution;
            rest /= resolution;
            c[a] = self.lo[a] + (i as f64 + 0.5) * (self.hi[a] - self.lo[a]) / resolution as f64;
        }
        c
    }
}

/// Histogram of one shard of tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardResult {
    pub counts: Vec<u64>,
    pub evaluated: u64,
    pub rejected_domain: u64,
    pub rejected_out_of_box: u64,
}

impl ShardResult {
    pub fn empty(cells: usize) -> Self {
        Self {
            counts: vec![0; cells],
            evaluated: 0,
            rejected_domain: 0,
            rejected_out_of_box: 0,
        }
    }

    pub fn merge(&mut self, other: &ShardResult) {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.evaluated += other.evaluated;
        self.rejected_domain += other.rejected_domain;
        self.rejected_out_of_box += other.rejected_out_of_box;
    }
}

/// Parameters of a histogram run shared by every shard.
#[derive(Debug, Clone, Copy)]
pub struct HistogramJob<'a> {
    pub spec: &'a ConfigSpec,
    /// Every variable draws from this pool.
    pub pool: &'a [Vec<f64>],
    pub tuples: usize,
    pub hbox: &'a HistBox,
    pub resolution: usize,
    pub seed: u64,
}

impl HistogramJob<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.hbox.p() != self.spec.p() {
            return Err(Error::InvalidBox(format!(
                "box has {} axes but the configuration has p = {}",
                self.hbox.p(),
                self.spec.p()
            )));
        }
        if self.resolution == 0 {
            return Err(Error::InvalidBox("resolution must be positive".into()));
        }
        let d = self.spec.uniform_dim().ok_or_else(|| {
            Error::InvalidSpec("empirical histograms need equal dimensions for all variables".into())
        })?;
        if self.pool.is_empty() || self.pool.iter().any(|x| x.len() != d) {
            return Err(Error::InvalidSpec(format!("point pool must be nonempty with points in R^{d}")));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.resolution.pow(self.hbox.p() as u32)
    }

    pub fn shards(&self) -> usize {
        self.tuples.div_ceil(SHARD_SIZE)
    }

    /// Evaluates shard `s`. The tuples of a shard are a fixed sequence, so a
    /// run of `n` tuples is a prefix of a run of `n' > n`.
    pub fn run_shard(&self, s: usize) -> ShardResult {
        let mut out = ShardResult::empty(self.cells());
        let count = SHARD_SIZE.min(self.tuples - s * SHARD_SIZE);
        let mut rng = substream(self.seed, Purpose::Tuples, s as u64);
        let k = self.spec.k();
        let mut x = Vec::with_capacity(self.spec.d_tot());
        for _ in 0..count {
            x.clear();
            for _ in 0..k {
                x.extend_from_slice(&self.pool[rng.random_range(0..self.pool.len())]);
            }
            let Ok(t) = self.spec.eval_phi(&x) else {
                out.rejected_domain += 1;
                continue;
            };
            out.evaluated += 1;
            match self.hbox.bin(&t, self.resolution) {
                Some(i) => out.counts[i] += 1,
                None => out.rejected_out_of_box += 1,
            }
        }
        out
    }

    pub fn report(&self, merged: ShardResult) -> EmpiricalReport {
        let hit = merged.counts.iter().filter(|&&c| c > 0).count();
        EmpiricalReport {
            resolution: self.resolution,
            hbox: self.hbox.clone(),
            tuples: self.tuples as u64,
            occupancy: hit as f64 / merged.counts.len() as f64,
            min_cell_count: merged.counts.iter().copied().min().unwrap_or(0),
            evaluated: merged.evaluated,
            rejected_domain: merged.rejected_domain,
            rejected_out_of_box: merged.rejected_out_of_box,
            counts: merged.counts,
        }
    }
}

/// Approximation of the pushforward of the product sample measure under `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReport {
    pub resolution: usize,
    pub hbox: HistBox,
    /// Row-major, `resolution^p` cells.
    pub counts: Vec<u64>,
    pub tuples: u64,
    pub evaluated: u64,
    pub rejected_domain: u64,
    pub rejected_out_of_box: u64,
    /// Fraction of cells with a positive count.
    pub occupancy: f64,
    pub min_cell_count: u64,
}

impl EmpiricalReport {
    pub fn rejections(&self) -> u64 {
        self.rejected_domain + self.rejected_out_of_box
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Single-threaded histogram; the `partopt` crate runs shards in parallel.
pub fn pushforward_histogram(job: &HistogramJob<'_>) -> Result<EmpiricalReport> {
    job.validate()?;
    let mut acc = ShardResult::empty(job.cells());
    for s in 0..job.shards() {
        acc.merge(&job.run_shard(s));
    }
    Ok(job.report(acc))
}

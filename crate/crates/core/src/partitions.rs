//! Bipartitions `σ = (σ_L | σ_R)` of the point variables and the
//! double-fibration test.

use alloc::vec::Vec;
use core::fmt;

use crate::expr::ConfigSpec;
use crate::incidence::IncidencePoint;
use crate::linalg::{rank_with_tolerance, Mat};
use crate::Rational;

/// A nontrivial bipartition. Bit `i` of `mask` set means variable `i` (0-based)
/// is on the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    pub mask: u32,
    pub k: usize,
    pub d_l: usize,
    pub d_r: usize,
    pub p: usize,
}

impl Partition {
    /// Panics unless `0 < mask < 2^k - 1`.
    pub fn new(spec: &ConfigSpec, mask: u32) -> Self {
        let k = spec.k();
        let full = (1u32 << k) - 1;
        assert!(mask != 0 && mask < full, "mask {mask:#b} is not a proper nonempty subset of {k} variables");
        let d_l = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| spec.dims()[i]).sum();
        Self {
            mask,
            k,
            d_l,
            d_r: spec.d_tot() - d_l,
            p: spec.p(),
        }
    }

    /// Parses the `(13|24)` notation; `"13"` alone names the left side.
    pub fn parse(spec: &ConfigSpec, s: &str) -> Option<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        let left = s.split('|').next()?;
        let mut mask = 0u32;
        let items: Vec<&str> = if left.contains(',') {
            left.split(',').map(str::trim).collect()
        } else {
            left.trim().split("").filter(|c| !c.is_empty()).collect()
        };
        for c in items {
            let i: usize = c.parse().ok()?;
            if i == 0 || i > spec.k() {
                return None;
            }
            mask |= 1 << (i - 1);
        }
        let full = (1u32 << spec.k()) - 1;
        (mask != 0 && mask != full).then(|| Self::new(spec, mask))
    }

    pub fn left(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |i| self.mask >> i & 1 == 1)
    }

    pub fn right(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |i| self.mask >> i & 1 == 0)
    }

    pub fn complement(&self) -> Self {
        Self {
            mask: !self.mask & ((1u32 << self.k) - 1),
            d_l: self.d_r,
            d_r: self.d_l,
            ..*self
        }
    }

    pub fn max_side(&self) -> usize {
        self.d_l.max(self.d_r)
    }

    pub fn min_side(&self) -> usize {
        self.d_l.min(self.d_r)
    }

    /// Necessary condition for the double fibration: `p ≤ min(d_L, d_R)`.
    pub fn feasible(&self) -> bool {
        self.p <= self.min_side()
    }

    /// `m_eff = (p − min(d_L, d_R)) / 2`.
    pub fn m_eff(&self) -> Rational {
        Rational::new(self.p as i64 - self.min_side() as i64, 2)
    }

    /// Mask of the pair `{σ, complement}` used to dedup in reports.
    pub fn canonical_mask(&self) -> u32 {
        self.mask.min(self.complement().mask)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.k > 9 { "," } else { "" };
        let side = |f: &mut fmt::Formatter<'_>, it: &mut dyn Iterator<Item = usize>| -> fmt::Result {
            for (n, i) in it.enumerate() {
                if n > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{}", i + 1)?;
            }
            Ok(())
        };
        f.write_str("(")?;
        side(f, &mut self.left())?;
        f.write_str("|")?;
        side(f, &mut self.right())?;
        f.write_str(")")
    }
}

/// All `2^k − 2` partitions in mask order.
pub fn enumerate_partitions(spec: &ConfigSpec) -> Vec<Partition> {
    let full = (1u32 << spec.k()) - 1;
    (1..full).map(|m| Partition::new(spec, m)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DfFlags {
    /// `π_L: Z_t → X_L` is a submersion: the `x_R` block of `DΦ` has rank `p`.
    pub left_ok: bool,
    /// The `x_L` block of `DΦ` has rank `p`.
    pub right_ok: bool,
}

impl DfFlags {
    pub fn both(&self) -> bool {
        self.left_ok && self.right_ok
    }
}

/// Double-fibration flags from a precomputed Jacobian.
pub fn df_flags(spec: &ConfigSpec, sigma: &Partition, jacobian: &Mat, tol_rank: f64) -> DfFlags {
    let p = spec.p();
    let block_rank = |vars: &mut dyn Iterator<Item = usize>| {
        let cols = spec.coordinate_indices(vars);
        rank_with_tolerance(&jacobian.select_columns(&cols), tol_rank).rank
    };
    DfFlags {
        left_ok: block_rank(&mut sigma.right()) == p,
        right_ok: block_rank(&mut sigma.left()) == p,
    }
}

/// Double-fibration flags at an incidence point. A point outside the domain
/// guard fails both.
pub fn check_double_fibration(spec: &ConfigSpec, sigma: &Partition, point: &IncidencePoint, tol_rank: f64) -> DfFlags {
    match spec.jacobian(&point.x) {
        Ok(j) => df_flags(spec, sigma, &j, tol_rank),
        Err(_) => DfFlags {
            left_ok: false,
            right_ok: false,
        },
    }
}

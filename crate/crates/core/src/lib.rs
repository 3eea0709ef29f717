//! Numerical engine for partition-optimization thresholds of `k`-point
//! configuration sets.
//!
//! Given a configuration function `Φ: (ℝ^{d_1} × … × ℝ^{d_k}) → ℝ^p`, the
//! engine samples the incidence relation `Z_t = Φ⁻¹(t)`, builds the conormal
//! bundle `{(x, DΦ(x)ᵀτ)}`, and for every bipartition `σ = (σ_L | σ_R)` of the
//! variables measures the rank of the two cotangent projections of the
//! associated canonical relation. The coranks feed three aggregations of the
//! sum threshold `max(d_L, d_R) + p + 2β`:
//!
//! * **global**: one partition for the whole relation,
//! * **local**: one partition per base point of `Z_t`,
//! * **microlocal**: one partition per conormal direction.
//!
//! Thresholds are exact rationals. Everything here is `no_std` + `alloc`; the
//! `partopt` crate adds parallel orchestration, file formats and the CLI.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod canonical;
pub mod corpus;
pub mod empirical;
mod error;
pub mod expr;
pub mod incidence;
pub mod linalg;
pub mod partitions;
pub mod rng;
pub mod threshold;

pub use error::{Error, Result};
pub use expr::{ConfigSpec, ExprNode, VecExpr};
pub use num_rational::Ratio;
pub use partitions::Partition;

/// Rational used for every threshold.
pub type Rational = Ratio<i64>;

/// Numerical tolerances shared by the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Gauss–Newton residual target, scaled by `1 + |t|`.
    pub tol_res: f64,
    /// Relative singular-value cutoff for rank decisions.
    pub tol_rank: f64,
    /// `|ξ_side| ≤ tol_zero · |ξ|` counts as a zero-section hit.
    pub tol_zero: f64,
    /// Guard on quotient denominators, norm arguments and sample degeneracy.
    pub eps_dom: f64,
    /// Minimum `σ_p / σ_1` of `DΦ` for an unambiguous kernel.
    pub gap_tol: f64,
    /// Rank cells whose singular-value gap falls below this are marginal.
    pub marginal_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_res: 1e-10,
            tol_rank: 1e-8,
            tol_zero: 1e-8,
            eps_dom: 1e-9,
            gap_tol: 1e-7,
            marginal_gap: 1e3,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("tol_res", self.tol_res),
            ("tol_rank", self.tol_rank),
            ("tol_zero", self.tol_zero),
            ("eps_dom", self.eps_dom),
            ("gap_tol", self.gap_tol),
            ("marginal_gap", self.marginal_gap),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidTolerance { name, value: v });
            }
        }
        Ok(())
    }
}

/// Which partition-optimization strategy an aggregation implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Global,
    Local,
    Microlocal,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Global, Mode::Local, Mode::Microlocal];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Global => "global",
            Mode::Local => "local",
            Mode::Microlocal => "microlocal",
        }
    }
}

impl core::fmt::Display for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Mode::Global),
            "local" => Ok(Mode::Local),
            "microlocal" => Ok(Mode::Microlocal),
            other => Err(Error::UnknownMode(other.into())),
        }
    }
}

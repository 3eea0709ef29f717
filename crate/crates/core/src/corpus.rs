//! Registry of the built-in configurations and their expected thresholds.
//!
//! Expected values are per-point thresholds `s_Φ / k` as exact rationals.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use crate::expr::{ConfigSpec, ExprNode, VecExpr};
use crate::incidence::SamplingHints;
use crate::threshold::ChartHint;
use crate::{Error, Mode, Rational, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// No value is registered for this mode.
    Unregistered,
    /// No admissible partition assignment exists.
    Vacuous,
    Threshold(Rational),
}

/// A constant recorded for context but not reproduced by the engine.
#[derive(Debug, Clone, Copy)]
pub struct Note {
    pub text: &'static str,
    pub value: fn(usize) -> Rational,
}

pub struct RegisteredConfig {
    pub name: &'static str,
    pub description: &'static str,
    pub k: usize,
    pub p: usize,
    pub valid_d: RangeInclusive<usize>,
    /// Dimensions exercised by the golden run.
    pub golden_d: &'static [usize],
    components: fn() -> Vec<ExprNode>,
    expected: fn(Mode, usize) -> Expectation,
    target_ok: Option<fn(&[f64], f64) -> bool>,
    degenerate: fn() -> Vec<ExprNode>,
    tau_directions: fn() -> Vec<Vec<f64>>,
    charts: fn() -> Vec<ChartHint>,
    pub note: Option<Note>,
}

impl core::fmt::Debug for RegisteredConfig {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RegisteredConfig").field("name", &self.name).finish_non_exhaustive()
    }
}

impl RegisteredConfig {
    fn check_d(&self, d: usize) -> Result<()> {
        if self.valid_d.contains(&d) {
            Ok(())
        } else {
            Err(Error::DimensionOutOfRange {
                name: self.name.into(),
                d,
                min: *self.valid_d.start(),
                max: *self.valid_d.end(),
            })
        }
    }

    /// The smallest valid dimension; the only one for planar configs.
    pub fn default_d(&self) -> usize {
        *self.valid_d.start()
    }

    pub fn spec(&self, d: usize) -> Result<ConfigSpec> {
        self.check_d(d)?;
        ConfigSpec::new(self.name, vec![d; self.k], (self.components)())
    }

    pub fn expected(&self, mode: Mode, d: usize) -> Result<Expectation> {
        self.check_d(d)?;
        Ok((self.expected)(mode, d))
    }

    pub fn hints(&self) -> SamplingHints {
        SamplingHints {
            target_ok: self.target_ok,
            degenerate: (self.degenerate)(),
            tau_directions: (self.tau_directions)(),
        }
    }

    /// Registered charts plus the coordinate axes.
    pub fn chart_hints(&self) -> Vec<ChartHint> {
        let mut h = (self.charts)();
        for a in ChartHint::axes(self.p) {
            if !h.contains(&a) {
                h.push(a);
            }
        }
        h
    }
}

fn r(n: i64, d: i64) -> Expectation {
    Expectation::Threshold(Rational::new(n, d))
}

fn positive(t: &[f64], eps: f64) -> bool {
    t.iter().all(|&v| v > eps)
}

fn nonzero(t: &[f64], eps: f64) -> bool {
    t.iter().all(|&v| v.abs() > eps)
}

/// Side lengths of a nondegenerate triangle.
fn strict_triangle(t: &[f64], eps: f64) -> bool {
    positive(t, eps) && t[0] + t[1] > t[2] + eps && t[0] + t[2] > t[1] + eps && t[1] + t[2] > t[0] + eps
}

/// `a(t) = (1 + t₁² − t₂²) / (2 t₁)` is the cosine of the angle at `x`.
pub fn similarity_cosine(t: &[f64]) -> f64 {
    (1.0 + t[0] * t[0] - t[1] * t[1]) / (2.0 * t[0])
}

fn similarity_target(t: &[f64], eps: f64) -> bool {
    positive(t, eps) && similarity_cosine(t).abs() < 1.0 - eps
}

fn area(a: usize, b: usize, c: usize) -> ExprNode {
    ExprNode::area(a, b, c)
}

fn det(a: VecExpr, b: VecExpr) -> ExprNode {
    ExprNode::Det2(a, b)
}

fn dist(a: usize, b: usize) -> ExprNode {
    ExprNode::dist(a, b)
}

fn ratio(a: usize, b: usize, c: usize, e: usize) -> ExprNode {
    ExprNode::div(dist(a, b), dist(c, e))
}

fn none() -> Vec<ExprNode> {
    Vec::new()
}

fn no_dirs() -> Vec<Vec<f64>> {
    Vec::new()
}

fn no_charts() -> Vec<ChartHint> {
    Vec::new()
}

// Variables: x = 0, y = 1, z = 2, w = 3, u = 4.

pub static BUILTINS: [RegisteredConfig; 9] = [
    RegisteredConfig {
        name: "distance",
        description: "distance |x-y|; all three strategies give (d+1)/2",
        k: 2,
        p: 1,
        valid_d: 2..=8,
        golden_d: &[2, 3, 4, 5],
        components: || vec![dist(0, 1)],
        expected: |_, d| r(d as i64 + 1, 2),
        target_ok: Some(positive),
        degenerate: none,
        tau_directions: no_dirs,
        charts: no_charts,
        note: None,
    },
    RegisteredConfig {
        name: "single_triangle_area",
        description: "area det[y-x, z-x] of one planar triangle; threshold 5/3",
        k: 3,
        p: 1,
        valid_d: 2..=2,
        golden_d: &[2],
        components: || vec![area(0, 1, 2)],
        expected: |_, _| r(5, 3),
        target_ok: Some(nonzero),
        degenerate: none,
        tau_directions: no_dirs,
        charts: no_charts,
        note: None,
    },
    RegisteredConfig {
        name: "quad_pair_areas",
        description: "areas (det[y-x, z-x], det[z-x, w-x]) of two triangles sharing an edge; \
                      microlocal 3/2 against the single-partition 7/4",
        k: 4,
        p: 2,
        valid_d: 2..=2,
        golden_d: &[2],
        components: || vec![area(0, 1, 2), area(0, 2, 3)],
        expected: |m, _| match m {
            Mode::Microlocal => r(3, 2),
            Mode::Global => r(7, 4),
            Mode::Local => Expectation::Unregistered,
        },
        target_ok: Some(nonzero),
        degenerate: || vec![area(0, 1, 3)],
        tau_directions: || vec![vec![1.0, 1.0], vec![1.0, -1.0]],
        charts: no_charts,
        note: None,
    },
    RegisteredConfig {
        name: "quad_triple_areas",
        description: "three triangle areas of a planar quadrilateral; microlocal 7/4",
        k: 4,
        p: 3,
        valid_d: 2..=2,
        golden_d: &[2],
        components: || vec![area(0, 1, 2), area(0, 2, 3), area(0, 1, 3)],
        expected: |m, _| match m {
            Mode::Microlocal => r(7, 4),
            _ => Expectation::Unregistered,
        },
        target_ok: Some(nonzero),
        // y-x, z-w and w-y pairwise independent
        degenerate: || {
            vec![
                det(VecExpr::diff(1, 0), VecExpr::diff(2, 3)),
                det(VecExpr::diff(1, 0), VecExpr::diff(3, 1)),
                det(VecExpr::diff(2, 3), VecExpr::diff(3, 1)),
            ]
        },
        tau_directions: || vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.0, -1.0]],
        charts: || vec![ChartHint::new(&[0, 2]), ChartHint::new(&[1])],
        note: None,
    },
    RegisteredConfig {
        name: "pentagon_fan",
        description: "three fan areas det[y-x, z-x], det[z-x, w-x], det[w-x, u-x] of a planar pentagon; \
                      microlocal 9/5",
        k: 5,
        p: 3,
        valid_d: 2..=2,
        golden_d: &[2],
        components: || vec![area(0, 1, 2), area(0, 2, 3), area(0, 3, 4)],
        expected: |m, _| match m {
            Mode::Microlocal => r(9, 5),
            _ => Expectation::Unregistered,
        },
        target_ok: Some(nonzero),
        degenerate: || vec![area(0, 1, 3), area(0, 2, 4), area(0, 1, 4)],
        tau_directions: no_dirs,
        charts: no_charts,
        note: None,
    },
    RegisteredConfig {
        name: "ratio_pairs",
        description: "distance ratios (|x-y|/|z-w|, |x-w|/|z-y|); microlocal (3d+1)/4",
        k: 4,
        p: 2,
        valid_d: 2..=6,
        golden_d: &[2, 3, 4],
        components: || vec![ratio(0, 1, 2, 3), ratio(0, 3, 2, 1)],
        expected: |m, d| match m {
            Mode::Microlocal => r(3 * d as i64 + 1, 4),
            _ => Expectation::Unregistered,
        },
        target_ok: Some(positive),
        degenerate: || vec![dist(0, 2), dist(1, 3)],
        tau_directions: || vec![vec![1.0, 1.0], vec![1.0, -1.0]],
        charts: no_charts,
        note: None,
    },
    RegisteredConfig {
        name: "pinned_ratio",
        description: "pinned ratio |x-z|/|x-y|; single-partition (2d+1)/3",
        k: 3,
        p: 1,
        valid_d: 2..=6,
        golden_d: &[2, 3, 4],
        components: || vec![ratio(0, 2, 0, 1)],
        expected: |m, d| match m {
            Mode::Global => r(2 * d as i64 + 1, 3),
            _ => Expectation::Unregistered,
        },
        target_ok: Some(positive),
        degenerate: || vec![dist(1, 2)],
        tau_directions: no_dirs,
        charts: no_charts,
        note: Some(Note {
            text: "a composition argument outside partition optimization gives (d+1)/2; not an engine target",
            value: |d| Rational::new(d as i64 + 1, 2),
        }),
    },
    RegisteredConfig {
        name: "congruence_triangles",
        description: "side lengths (|x-y|, |x-z|, |y-z|); every partition meets a zero section, \
                      so only the microlocal strategy applies: (2d+3)/3",
        k: 3,
        p: 3,
        valid_d: 4..=6,
        golden_d: &[4, 5],
        components: || vec![dist(0, 1), dist(0, 2), dist(1, 2)],
        expected: |m, d| match m {
            Mode::Global | Mode::Local => Expectation::Vacuous,
            Mode::Microlocal => r(2 * d as i64 + 3, 3),
        },
        target_ok: Some(strict_triangle),
        degenerate: none,
        tau_directions: no_dirs,
        // complements of the lines {τ1 = τ2 = 0}, {τ1 = τ3 = 0}, {τ2 = τ3 = 0}
        charts: || vec![ChartHint::new(&[0, 1]), ChartHint::new(&[0, 2]), ChartHint::new(&[1, 2])],
        note: None,
    },
    RegisteredConfig {
        name: "similarity_triangles",
        description: "shape ratios (|x-z|/|x-y|, |y-z|/|x-y|) of a triangle; (2d+2)/3",
        k: 3,
        p: 2,
        valid_d: 3..=6,
        golden_d: &[3, 4],
        components: || vec![ratio(0, 2, 0, 1), ratio(1, 2, 0, 1)],
        expected: |_, d| r(2 * d as i64 + 2, 3),
        target_ok: Some(similarity_target),
        degenerate: none,
        tau_directions: no_dirs,
        charts: no_charts,
        note: None,
    },
];

pub fn builtin_configs() -> &'static [RegisteredConfig] {
    &BUILTINS
}

pub fn lookup(name: &str) -> Result<&'static RegisteredConfig> {
    BUILTINS
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::UnknownConfig(name.into()))
}

/// Registered per-point threshold of `name` in `mode` at dimension `d`.
pub fn expected_threshold(name: &str, mode: Mode, d: usize) -> Result<Expectation> {
    lookup(name)?.expected(mode, d)
}

impl core::fmt::Display for Expectation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Expectation::Unregistered => f.write_str("-"),
            Expectation::Vacuous => f.write_str("vacuous"),
            Expectation::Threshold(r) => f.write_str(&format!("{r}")),
        }
    }
}

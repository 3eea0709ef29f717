//! Configuration functions as typed expression trees.
//!
//! A [`ConfigSpec`] holds `p` scalar component expressions over `k` point
//! variables `x_1 ∈ ℝ^{d_1}, …, x_k ∈ ℝ^{d_k}`. Points are passed flattened:
//! variable `i` occupies `x[offset(i)..offset(i) + d_i]`.
//!
//! Variable and coordinate indices are 0-based in the tree; the parser and
//! renderer use the 1-based `x[1]` convention.

pub mod jet;
pub mod parse;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use num_traits::Float;

use crate::linalg::Mat;
use crate::{Error, Result};
use jet::{Jet1, Jet2, Scalar};

/// Vector-valued subexpression: a point variable or sums and differences of them.
#[derive(Debug, Clone, PartialEq)]
pub enum VecExpr {
    Var(usize),
    Add(Box<VecExpr>, Box<VecExpr>),
    Sub(Box<VecExpr>, Box<VecExpr>),
}

impl VecExpr {
    pub fn var(i: usize) -> Self {
        VecExpr::Var(i)
    }

    /// `x_i − x_j`, the common building block.
    pub fn diff(i: usize, j: usize) -> Self {
        VecExpr::Sub(Box::new(VecExpr::Var(i)), Box::new(VecExpr::Var(j)))
    }

    fn visit_vars(&self, f: &mut impl FnMut(usize)) {
        match self {
            VecExpr::Var(i) => f(*i),
            VecExpr::Add(a, b) | VecExpr::Sub(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }
}

/// Scalar expression node.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Coord { var: usize, coord: usize },
    Const(f64),
    Add(Box<ExprNode>, Box<ExprNode>),
    Sub(Box<ExprNode>, Box<ExprNode>),
    Mul(Box<ExprNode>, Box<ExprNode>),
    /// Guarded: `|denominator| ≤ ε_dom` is a domain error.
    Div(Box<ExprNode>, Box<ExprNode>),
    Neg(Box<ExprNode>),
    /// Integer power; a negative exponent guards the base like a quotient.
    Pow(Box<ExprNode>, i32),
    Dot(VecExpr, VecExpr),
    /// Euclidean norm; guarded: `|v| < ε_dom` is a domain error.
    Norm(VecExpr),
    /// `det[a, b]` of planar vectors.
    Det2(VecExpr, VecExpr),
}

impl ExprNode {
    pub fn add(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Div(Box::new(a), Box::new(b))
    }

    pub fn neg(a: ExprNode) -> Self {
        ExprNode::Neg(Box::new(a))
    }

    pub fn pow(a: ExprNode, n: i32) -> Self {
        ExprNode::Pow(Box::new(a), n)
    }

    /// `|x_i − x_j|`.
    pub fn dist(i: usize, j: usize) -> Self {
        ExprNode::Norm(VecExpr::diff(i, j))
    }

    /// `det[x_b − x_a, x_c − x_a]`.
    pub fn area(a: usize, b: usize, c: usize) -> Self {
        ExprNode::Det2(VecExpr::diff(b, a), VecExpr::diff(c, a))
    }

    /// Calls `f` on every point variable the expression reads.
    pub fn visit_vars(&self, f: &mut impl FnMut(usize)) {
        match self {
            ExprNode::Coord { var, .. } => f(*var),
            ExprNode::Const(_) => {}
            ExprNode::Add(a, b) | ExprNode::Sub(a, b) | ExprNode::Mul(a, b) | ExprNode::Div(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            ExprNode::Neg(a) | ExprNode::Pow(a, _) => a.visit_vars(f),
            ExprNode::Dot(a, b) | ExprNode::Det2(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            ExprNode::Norm(a) => a.visit_vars(f),
        }
    }
}

/// Default variable names: `x, y, z, w, u` for `k ≤ 5`, else `x1 … xk`.
pub fn default_var_names(k: usize) -> Vec<String> {
    const SHORT: [&str; 5] = ["x", "y", "z", "w", "u"];
    if k <= SHORT.len() {
        SHORT[..k].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=k).map(|i| format!("x{i}")).collect()
    }
}

/// A validated configuration function `Φ: ℝ^{d_1} × … × ℝ^{d_k} → ℝ^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpec {
    name: String,
    var_names: Vec<String>,
    dims: Vec<usize>,
    components: Vec<ExprNode>,
    offsets: Vec<usize>,
    d_tot: usize,
    guard: f64,
}

impl ConfigSpec {
    pub const DEFAULT_GUARD: f64 = 1e-9;

    /// Builds a spec with default variable names; `p = components.len()`.
    pub fn new(name: impl Into<String>, dims: Vec<usize>, components: Vec<ExprNode>) -> Result<Self> {
        let names = default_var_names(dims.len());
        Self::with_names(name, names, dims, components)
    }

    pub fn with_names(
        name: impl Into<String>,
        var_names: Vec<String>,
        dims: Vec<usize>,
        components: Vec<ExprNode>,
    ) -> Result<Self> {
        let k = dims.len();
        if k < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 point variables, got {k}")));
        }
        if components.is_empty() {
            return Err(Error::InvalidSpec("need at least one component".into()));
        }
        if var_names.len() != k {
            return Err(Error::InvalidSpec(format!("{} variable names for {k} variables", var_names.len())));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidSpec(format!("variable {} has dimension 0", i + 1)));
        }
        for (l, c) in components.iter().enumerate() {
            check_scalar(c, &dims).map_err(|m| Error::InvalidSpec(format!("component {}: {m}", l + 1)))?;
        }
        let mut offsets = Vec::with_capacity(k);
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        Ok(Self {
            name: name.into(),
            var_names,
            dims,
            components,
            offsets,
            d_tot: acc,
            guard: Self::DEFAULT_GUARD,
        })
    }

    /// Replaces the domain guard `ε_dom`. Zero disables the norm guard;
    /// division by an exact zero is always rejected.
    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn d_tot(&self) -> usize {
        self.d_tot
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn components(&self) -> &[ExprNode] {
        &self.components
    }

    /// Start of variable `i` in the flattened point.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Flattened coordinate indices of the variables in `vars`, in order.
    pub fn coordinate_indices(&self, vars: impl IntoIterator<Item = usize>) -> Vec<usize> {
        vars.into_iter()
            .flat_map(|i| self.offsets[i]..self.offsets[i] + self.dims[i])
            .collect()
    }

    /// Common ambient dimension if every `d_i` is equal.
    pub fn uniform_dim(&self) -> Option<usize> {
        let d = self.dims[0];
        self.dims.iter().all(|&x| x == d).then_some(d)
    }

    fn check_len(&self, x: &[f64]) {
        assert_eq!(x.len(), self.d_tot, "point has {} coordinates, spec `{}` needs {}", x.len(), self.name, self.d_tot);
    }

    fn seeded<S: Scalar>(&self, x: &[f64]) -> Vec<S> {
        let n = self.d_tot;
        x.iter().enumerate().map(|(i, &v)| S::variable(v, i, n)).collect()
    }

    fn eval_generic<S: Scalar>(&self, node: &ExprNode, vars: &[S]) -> Result<S> {
        Evaluator { spec: self, vars }.scalar(node)
    }

    /// `Φ(x)`.
    pub fn eval_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x);
        self.components.iter().map(|c| self.eval_generic::<f64>(c, x)).collect()
    }

    /// Evaluates an auxiliary scalar expression over the same variables, e.g. a
    /// degeneracy predicate.
    pub fn eval_scalar(&self, expr: &ExprNode) -> impl Fn(&[f64]) -> Result<f64> + '_ {
        let expr = expr.clone();
        move |x| {
            self.check_len(x);
            self.eval_generic::<f64>(&expr, x)
        }
    }

    /// `DΦ(x)`, `p × d_tot`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Mat> {
        self.check_len(x);
        let vars = self.seeded::<Jet1>(x);
        let mut j = Mat::zeros(self.p(), self.d_tot);
        for (l, c) in self.components.iter().enumerate() {
            let g = self.eval_generic(c, &vars)?.gradient;
            for (col, v) in g.into_iter().enumerate() {
                j[(l, col)] = v;
            }
        }
        Ok(j)
    }

    /// Value, Jacobian and the `p` component Hessians in one second-order pass.
    pub fn second_order(&self, x: &[f64]) -> Result<SecondOrder> {
        self.check_len(x);
        let n = self.d_tot;
        let vars = self.seeded::<Jet2>(x);
        let mut value = Vec::with_capacity(self.p());
        let mut jacobian = Mat::zeros(self.p(), n);
        let mut hessians = Vec::with_capacity(self.p());
        for (l, c) in self.components.iter().enumerate() {
            let jet = self.eval_generic(c, &vars)?;
            value.push(jet.value);
            for (col, v) in jet.gradient.iter().enumerate() {
                jacobian[(l, col)] = *v;
            }
            hessians.push(Mat::from_row_slice(n, n, &jet.hessian));
        }
        Ok(SecondOrder { value, jacobian, hessians })
    }

    /// `H_τ = Σ_l τ_l · Hess Φ_l(x)`.
    pub fn tau_hessian(&self, x: &[f64], tau: &[f64]) -> Result<Mat> {
        assert_eq!(tau.len(), self.p(), "tau has the wrong length");
        Ok(self.second_order(x)?.tau_hessian(tau))
    }

    /// Renders a scalar expression in the prefix grammar accepted by
    /// [`parse::parse_component`].
    pub fn render(&self, node: &ExprNode) -> String {
        let mut s = String::new();
        self.render_into(node, &mut s);
        s
    }

    fn render_into(&self, node: &ExprNode, s: &mut String) {
        let bin = |s: &mut String, f: &str, a: &ExprNode, b: &ExprNode| {
            s.push_str(f);
            s.push('(');
            self.render_into(a, s);
            s.push_str(", ");
            self.render_into(b, s);
            s.push(')');
        };
        match node {
            ExprNode::Coord { var, coord } => {
                let _ = write!(s, "{}[{}]", self.var_names[*var], coord + 1);
            }
            ExprNode::Const(c) => {
                let _ = write!(s, "{c:?}");
            }
            ExprNode::Add(a, b) => bin(s, "add", a, b),
            ExprNode::Sub(a, b) => bin(s, "sub", a, b),
            ExprNode::Mul(a, b) => bin(s, "mul", a, b),
            ExprNode::Div(a, b) => bin(s, "div", a, b),
            ExprNode::Neg(a) => {
                s.push_str("neg(");
                self.render_into(a, s);
                s.push(')');
            }
            ExprNode::Pow(a, n) => {
                s.push_str("pow(");
                self.render_into(a, s);
                let _ = write!(s, ", {n})");
            }
            ExprNode::Dot(a, b) => self.render_vec_call(s, "dot", &[a, b]),
            ExprNode::Norm(a) => self.render_vec_call(s, "norm", &[a]),
            ExprNode::Det2(a, b) => self.render_vec_call(s, "det2", &[a, b]),
        }
    }

    fn render_vec_call(&self, s: &mut String, f: &str, args: &[&VecExpr]) {
        s.push_str(f);
        s.push('(');
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            self.render_vec(a, s);
        }
        s.push(')');
    }

    fn render_vec(&self, v: &VecExpr, s: &mut String) {
        match v {
            VecExpr::Var(i) => s.push_str(&self.var_names[*i]),
            VecExpr::Add(a, b) | VecExpr::Sub(a, b) => {
                s.push_str(if matches!(v, VecExpr::Add(..)) { "add(" } else { "sub(" });
                self.render_vec(a, s);
                s.push_str(", ");
                self.render_vec(b, s);
                s.push(')');
            }
        }
    }
}

/// Output of [`ConfigSpec::second_order`].
#[derive(Debug, Clone)]
pub struct SecondOrder {
    pub value: Vec<f64>,
    pub jacobian: Mat,
    pub hessians: Vec<Mat>,
}

impl SecondOrder {
    pub fn tau_hessian(&self, tau: &[f64]) -> Mat {
        let n = self.jacobian.cols();
        let mut h = Mat::zeros(n, n);
        for (t, hl) in tau.iter().zip(&self.hessians) {
            if *t == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += t * hl[(i, j)];
                }
            }
        }
        h
    }
}

/// Dimension of a vector expression, or a type error.
fn vec_dim(v: &VecExpr, dims: &[usize]) -> core::result::Result<usize, String> {
    match v {
        VecExpr::Var(i) => dims
            .get(*i)
            .copied()
            .ok_or_else(|| format!("variable index {} out of range 1..={}", i + 1, dims.len())),
        VecExpr::Add(a, b) | VecExpr::Sub(a, b) => {
            let (da, db) = (vec_dim(a, dims)?, vec_dim(b, dims)?);
            if da != db {
                return Err(format!("vector dimensions {da} and {db} differ"));
            }
            Ok(da)
        }
    }
}

fn check_scalar(node: &ExprNode, dims: &[usize]) -> core::result::Result<(), String> {
    match node {
        ExprNode::Coord { var, coord } => {
            let d = dims
                .get(*var)
                .ok_or_else(|| format!("variable index {} out of range 1..={}", var + 1, dims.len()))?;
            if coord >= d {
                return Err(format!("coordinate {} of variable {} exceeds its dimension {d}", coord + 1, var + 1));
            }
            Ok(())
        }
        ExprNode::Const(c) => {
            if c.is_finite() {
                Ok(())
            } else {
                Err("non-finite constant".into())
            }
        }
        ExprNode::Add(a, b) | ExprNode::Sub(a, b) | ExprNode::Mul(a, b) | ExprNode::Div(a, b) => {
            check_scalar(a, dims)?;
            check_scalar(b, dims)
        }
        ExprNode::Neg(a) | ExprNode::Pow(a, _) => check_scalar(a, dims),
        ExprNode::Dot(a, b) => {
            let (da, db) = (vec_dim(a, dims)?, vec_dim(b, dims)?);
            if da != db {
                return Err(format!("dot of vectors with dimensions {da} and {db}"));
            }
            Ok(())
        }
        ExprNode::Norm(a) => vec_dim(a, dims).map(|_| ()),
        ExprNode::Det2(a, b) => {
            let (da, db) = (vec_dim(a, dims)?, vec_dim(b, dims)?);
            if da != 2 || db != 2 {
                return Err(format!("det2 needs planar vectors, got dimensions {da} and {db}"));
            }
            Ok(())
        }
    }
}

struct Evaluator<'a, S> {
    spec: &'a ConfigSpec,
    vars: &'a [S],
}

impl<S: Scalar> Evaluator<'_, S> {
    fn n(&self) -> usize {
        self.spec.d_tot
    }

    fn vector(&self, v: &VecExpr) -> Vec<S> {
        match v {
            VecExpr::Var(i) => {
                let o = self.spec.offsets[*i];
                self.vars[o..o + self.spec.dims[*i]].to_vec()
            }
            VecExpr::Add(a, b) => {
                let (a, b) = (self.vector(a), self.vector(b));
                a.iter().zip(&b).map(|(x, y)| x.add(y)).collect()
            }
            VecExpr::Sub(a, b) => {
                let (a, b) = (self.vector(a), self.vector(b));
                a.iter().zip(&b).map(|(x, y)| x.sub(y)).collect()
            }
        }
    }

    fn scalar(&self, node: &ExprNode) -> Result<S> {
        let guard = self.spec.guard;
        Ok(match node {
            ExprNode::Coord { var, coord } => self.vars[self.spec.offsets[*var] + coord].clone(),
            ExprNode::Const(c) => S::constant(*c, self.n()),
            ExprNode::Add(a, b) => self.scalar(a)?.add(&self.scalar(b)?),
            ExprNode::Sub(a, b) => self.scalar(a)?.sub(&self.scalar(b)?),
            ExprNode::Mul(a, b) => self.scalar(a)?.mul(&self.scalar(b)?),
            ExprNode::Div(a, b) => {
                let num = self.scalar(a)?;
                let den = self.scalar(b)?;
                let mag = den.value().abs();
                if !(mag > guard) {
                    return Err(Error::Domain { what: "denominator", value: mag });
                }
                num.mul(&den.recip())
            }
            ExprNode::Neg(a) => self.scalar(a)?.neg(),
            ExprNode::Pow(a, n) => {
                let base = self.scalar(a)?;
                if *n < 0 {
                    let mag = base.value().abs();
                    if !(mag > guard) {
                        return Err(Error::Domain { what: "power base", value: mag });
                    }
                }
                match n {
                    0 => S::constant(1.0, self.n()),
                    1 => base,
                    2 => base.mul(&base),
                    _ => base.powi(*n),
                }
            }
            ExprNode::Dot(a, b) => {
                let (a, b) = (self.vector(a), self.vector(b));
                sum(a.iter().zip(&b).map(|(x, y)| x.mul(y)), self.n())
            }
            ExprNode::Norm(a) => {
                let a = self.vector(a);
                let sq = sum(a.iter().map(|x| x.mul(x)), self.n());
                let norm = Float::sqrt(sq.value());
                if norm < guard {
                    return Err(Error::Domain { what: "norm argument", value: norm });
                }
                sq.sqrt()
            }
            ExprNode::Det2(a, b) => {
                let (a, b) = (self.vector(a), self.vector(b));
                a[0].mul(&b[1]).sub(&a[1].mul(&b[0]))
            }
        })
    }
}

fn sum<S: Scalar>(mut it: impl Iterator<Item = S>, n: usize) -> S {
    match it.next() {
        Some(first) => it.fold(first, |acc, x| acc.add(&x)),
        None => S::constant(0.0, n),
    }
}

/// Outcome of [`validate_derivatives`]. Errors are `|A − B|_∞ / (1 + |A|_∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    /// The point or a stencil point violated a domain guard; nothing was compared.
    pub skipped: bool,
    /// Jacobian against central differences of `Φ`.
    pub jacobian_error: f64,
    /// Component Hessians against central differences of the Jacobian.
    pub hessian_error: f64,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.jacobian_error.max(self.hessian_error)
    }
}

/// Compares forward-mode derivatives with central finite differences of step `h`.
///
/// Since `H_τ` is linear in `τ`, checking each component Hessian covers every `τ`.
pub fn validate_derivatives(spec: &ConfigSpec, x: &[f64], h: f64) -> DerivativeReport {
    let skip = DerivativeReport {
        skipped: true,
        jacobian_error: 0.0,
        hessian_error: 0.0,
    };
    let Ok(so) = spec.second_order(x) else {
        return skip;
    };
    let n = spec.d_tot();
    let p = spec.p();
    let mut fd_j = Mat::zeros(p, n);
    let mut fd_h: Vec<Mat> = vec![Mat::zeros(n, n); p];
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        let (fp, jp) = match (spec.eval_phi(&xp), spec.jacobian(&xp)) {
            (Ok(f), Ok(jm)) => (f, jm),
            _ => return skip,
        };
        xp[j] = x[j] - h;
        let (fm, jm) = match (spec.eval_phi(&xp), spec.jacobian(&xp)) {
            (Ok(f), Ok(jm)) => (f, jm),
            _ => return skip,
        };
        xp[j] = x[j];
        for l in 0..p {
            fd_j[(l, j)] = (fp[l] - fm[l]) / (2.0 * h);
            for i in 0..n {
                fd_h[l][(i, j)] = (jp[(l, i)] - jm[(l, i)]) / (2.0 * h);
            }
        }
    }
    let rel = |a: &Mat, b: &Mat| a.sub(b).max_abs() / (1.0 + a.max_abs());
    let jacobian_error = rel(&so.jacobian, &fd_j);
    let hessian_error = so
        .hessians
        .iter()
        .zip(&fd_h)
        .map(|(a, b)| rel(a, b))
        .fold(0.0, f64::max);
    DerivativeReport {
        skipped: false,
        jacobian_error,
        hessian_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad_pair() -> ConfigSpec {
        ConfigSpec::new("quad_pair_areas", vec![2; 4], vec![ExprNode::area(0, 1, 2), ExprNode::area(0, 2, 3)]).unwrap()
    }

    fn distance(d: usize) -> ConfigSpec {
        ConfigSpec::new("distance", vec![d; 2], vec![ExprNode::dist(0, 1)]).unwrap()
    }

    fn brute_det(a: [f64; 2], b: [f64; 2]) -> f64 {
        // cofactor expansion along the first column
        a[0] * b[1] + (-1.0) * a[1] * b[0]
    }

    #[test]
    fn quad_pair_value_matches_brute_determinant() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        let x: Vec<f64> = pts.iter().flatten().copied().collect();
        let v = quad_pair().eval_phi(&x).unwrap();
        let sub = |a: [f64; 2], b: [f64; 2]| [a[0] - b[0], a[1] - b[1]];
        let e1 = brute_det(sub(pts[1], pts[0]), sub(pts[2], pts[0]));
        let e2 = brute_det(sub(pts[2], pts[0]), sub(pts[3], pts[0]));
        assert_eq!(v, vec![e1, e2]);
        assert_eq!(v, vec![1.0, 1.0]);
    }

    #[test]
    fn distance_guard_at_coincident_points() {
        let x = [0.0; 4];
        assert!(matches!(distance(2).eval_phi(&x), Err(Error::Domain { .. })));
        assert_eq!(distance(2).with_guard(0.0).eval_phi(&x).unwrap(), vec![0.0]);
    }

    #[test]
    fn ratio_degenerate_denominator() {
        let spec = ConfigSpec::new(
            "ratio",
            vec![2; 4],
            vec![ExprNode::div(ExprNode::dist(0, 1), ExprNode::dist(2, 3))],
        )
        .unwrap();
        // x = y trips the norm guard unless it is disabled
        let x = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 2.0, 0.0];
        assert!(matches!(spec.eval_phi(&x), Err(Error::Domain { .. })));
        let spec = spec.with_guard(0.0);
        assert_eq!(spec.eval_phi(&x).unwrap(), vec![0.0]);
        let x = [1.0, 0.0, 2.0, 1.0, 0.5, 0.5, 0.5, 0.5];
        assert!(matches!(spec.eval_phi(&x), Err(Error::Domain { .. })));
    }

    #[test]
    fn distance_gradient_is_unit_vector() {
        let j = distance(2).jacobian(&[0.0, 0.0, 3.0, 4.0]).unwrap();
        let want = [-0.6, -0.8, 0.6, 0.8];
        for (c, w) in want.iter().enumerate() {
            assert!((j[(0, c)] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn quad_pair_first_row_ignores_w() {
        let j = quad_pair().jacobian(&[0.3, 0.1, 1.2, 0.4, 0.2, 0.9, -0.7, 0.3]).unwrap();
        assert_eq!((j[(0, 6)], j[(0, 7)]), (0.0, 0.0));
    }

    #[test]
    fn congruence_block_zero_pattern() {
        let spec = ConfigSpec::new(
            "congruence",
            vec![4; 3],
            vec![ExprNode::dist(0, 1), ExprNode::dist(0, 2), ExprNode::dist(1, 2)],
        )
        .unwrap();
        let x: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64) * 0.3 + i as f64 * 0.01).collect();
        let j = spec.jacobian(&x).unwrap();
        // (component, variable) blocks that must vanish
        for (l, var) in [(0, 2), (1, 1), (2, 0)] {
            for c in 0..4 {
                assert_eq!(j[(l, var * 4 + c)], 0.0);
            }
        }
    }

    #[test]
    fn distance_tau_hessian_block_form() {
        // x=(0,0), y=(1,0): H = [[P, -P], [-P, P]] with P = I − uuᵀ = diag(0, 1)
        let h = distance(2).tau_hessian(&[0.0, 0.0, 1.0, 0.0], &[1.0]).unwrap();
        let p = [[0.0, 0.0], [0.0, 1.0]];
        for bi in 0..2 {
            for bj in 0..2 {
                let s = if bi == bj { 1.0 } else { -1.0 };
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((h[(bi * 2 + i, bj * 2 + j)] - s * p[i][j]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn distance_tau_hessian_matches_jacobian_differences() {
        let spec = distance(3);
        let x = [0.1, -0.4, 0.7, 0.9, 0.2, -0.3];
        let r = validate_derivatives(&spec, &x, 1e-5);
        assert!(!r.skipped);
        assert!(r.max_error() < 1e-8, "{r:?}");
    }

    #[test]
    fn tau_zero_gives_zero_hessian() {
        let h = quad_pair().tau_hessian(&[0.3, 0.1, 1.2, 0.4, 0.2, 0.9, -0.7, 0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn area_hessian_is_constant_and_fd_exact() {
        let spec = quad_pair();
        let a = spec.second_order(&[0.3, 0.1, 1.2, 0.4, 0.2, 0.9, -0.7, 0.3]).unwrap();
        let b = spec.second_order(&[-2.0, 5.0, 0.0, 1.0, 3.0, 3.0, 0.5, -1.5]).unwrap();
        for (ha, hb) in a.hessians.iter().zip(&b.hessians) {
            assert_eq!(ha, hb);
        }
        let r = validate_derivatives(&spec, &[0.3, 0.1, 1.2, 0.4, 0.2, 0.9, -0.7, 0.3], 1e-5);
        assert!(r.max_error() < 1e-10, "{r:?}");
    }

    #[test]
    fn guard_violation_skips_report() {
        let r = validate_derivatives(&distance(2), &[0.5, 0.5, 0.5, 0.5], 1e-5);
        assert!(r.skipped);
    }

    #[test]
    fn rejects_ill_typed_specs() {
        assert!(ConfigSpec::new("one", vec![2], vec![ExprNode::Const(1.0)]).is_err());
        assert!(ConfigSpec::new("none", vec![2, 2], vec![]).is_err());
        assert!(ConfigSpec::new("det3", vec![3, 3], vec![ExprNode::Det2(VecExpr::var(0), VecExpr::var(1))]).is_err());
        assert!(ConfigSpec::new("mixed", vec![2, 3], vec![ExprNode::dist(0, 1)]).is_err());
        assert!(ConfigSpec::new("oob", vec![2, 2], vec![ExprNode::Coord { var: 0, coord: 2 }]).is_err());
        assert!(ConfigSpec::new("oobv", vec![2, 2], vec![ExprNode::dist(0, 2)]).is_err());
    }

    proptest! {
        #[test]
        fn tau_hessian_is_linear(
            x in proptest::collection::vec(-1.0f64..1.0, 12),
            t1 in proptest::collection::vec(-1.0f64..1.0, 3),
            t2 in proptest::collection::vec(-1.0f64..1.0, 3),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let spec = ConfigSpec::new(
                "cong",
                vec![4; 3],
                vec![ExprNode::dist(0, 1), ExprNode::dist(0, 2), ExprNode::dist(1, 2)],
            ).unwrap();
            let so = match spec.second_order(&x) { Ok(s) => s, Err(_) => return Ok(()) };
            let mix: Vec<f64> = t1.iter().zip(&t2).map(|(u, v)| a * u + b * v).collect();
            let lhs = so.tau_hessian(&mix);
            let rhs = Mat::from_fn(12, 12, |i, j| a * so.tau_hessian(&t1)[(i, j)] + b * so.tau_hessian(&t2)[(i, j)]);
            prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * (1.0 + lhs.max_abs()));
        }

        #[test]
        fn hessians_are_symmetric(x in proptest::collection::vec(-1.0f64..1.0, 8)) {
            let spec = ConfigSpec::new(
                "ratio",
                vec![2; 4],
                vec![
                    ExprNode::div(ExprNode::dist(0, 1), ExprNode::dist(2, 3)),
                    ExprNode::div(ExprNode::dist(0, 3), ExprNode::dist(2, 1)),
                ],
            ).unwrap();
            if let Ok(so) = spec.second_order(&x) {
                for h in &so.hessians {
                    prop_assert_eq!(h, &h.transpose());
                }
            }
        }
    }
}

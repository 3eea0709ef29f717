//! Prefix-notation parser for component expressions.
//!
//! ```text
//! expr   := call | coord | var | number
//! call   := ident '(' expr (',' expr)* ')'
//! coord  := var '[' integer ']'          1-based coordinate, scalar
//! var    := ident                         a point variable, vector
//! number := ['-'] digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
//! ```
//!
//! | function      | arguments              | result |
//! |---------------|------------------------|--------|
//! | `add`, `sub`  | two scalars or two equal-dimension vectors | same kind |
//! | `mul`, `div`  | two scalars            | scalar |
//! | `neg`         | scalar                 | scalar |
//! | `pow`         | scalar, integer literal | scalar |
//! | `dot`         | two equal-dimension vectors | scalar |
//! | `norm`        | vector                 | scalar |
//! | `det2`        | two planar vectors     | scalar |
//!
//! Type and arity errors carry the byte offset, line and column of the
//! offending token.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use num_traits::Float;

use super::{ExprNode, VecExpr};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub message: String,
}

impl ParseError {
    fn at(src: &str, offset: usize, message: impl Into<String>) -> Self {
        let (line, column) = line_column(src, offset);
        Self {
            offset,
            line,
            column,
            message: message.into(),
        }
    }
}

/// 1-based line and column of byte `offset` in `src`.
pub fn line_column(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let column = before[line_start..].chars().count() + 1;
    (line, column)
}

enum Typed {
    Scalar(ExprNode),
    Vector(VecExpr, usize),
}

impl Typed {
    fn kind(&self) -> String {
        match self {
            Typed::Scalar(_) => "scalar".into(),
            Typed::Vector(_, d) => format!("{d}-vector"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    names: &'a [String],
    dims: &'a [usize],
}

/// Parses one scalar component over variables `names` with dimensions `dims`.
pub fn parse_component(src: &str, names: &[String], dims: &[usize]) -> Result<ExprNode, ParseError> {
    assert_eq!(names.len(), dims.len());
    let mut p = Parser { src, pos: 0, names, dims };
    let start = p.skip_ws();
    let e = p.expr()?;
    let end = p.skip_ws();
    if end < src.len() {
        return Err(p.err(end, "unexpected trailing input"));
    }
    match e {
        Typed::Scalar(s) => Ok(s),
        Typed::Vector(_, d) => Err(p.err(start, format!("component must be a scalar, found a {d}-vector"))),
    }
}

impl Parser<'_> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> ParseError {
        ParseError::at(self.src, offset, msg)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) -> usize {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        self.pos
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        let at = self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.err(at, format!("expected `{want}`, found `{c}`"))),
            None => Err(self.err(at, format!("expected `{want}`, found end of input"))),
        }
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        &self.src[start..self.pos]
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
            *i > s
        };
        if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
            i += 1;
        }
        let mut any = digits(&mut i);
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            any |= digits(&mut i);
        }
        if !any {
            return Err(self.err(start, "malformed number"));
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            i += 1;
            if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
                i += 1;
            }
            if !digits(&mut i) {
                return Err(self.err(start, "malformed exponent"));
            }
        }
        self.pos = i;
        self.src[start..i]
            .parse::<f64>()
            .map_err(|_| self.err(start, "malformed number"))
    }

    fn expr(&mut self) -> Result<Typed, ParseError> {
        let at = self.skip_ws();
        let Some(c) = self.peek() else {
            return Err(self.err(at, "expected an expression, found end of input"));
        };
        if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            return Ok(Typed::Scalar(ExprNode::Const(self.number()?)));
        }
        if !(c.is_ascii_alphabetic() || c == '_') {
            return Err(self.err(at, format!("unexpected character `{c}`")));
        }
        let name = self.ident().to_string();
        let after = self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                self.call(&name, at)
            }
            Some('[') => {
                self.pos += 1;
                let var = self.variable(&name, at)?;
                let idx_at = self.skip_ws();
                let idx = self.number()?;
                if Float::fract(idx) != 0.0 || idx < 1.0 {
                    return Err(self.err(idx_at, "coordinate index must be a positive integer"));
                }
                let coord = idx as usize - 1;
                if coord >= self.dims[var] {
                    return Err(self.err(
                        idx_at,
                        format!("coordinate {} exceeds dimension {} of `{name}`", coord + 1, self.dims[var]),
                    ));
                }
                self.expect(']')?;
                Ok(Typed::Scalar(ExprNode::Coord { var, coord }))
            }
            _ => {
                self.pos = after;
                let var = self.variable(&name, at)?;
                Ok(Typed::Vector(VecExpr::Var(var), self.dims[var]))
            }
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<usize, ParseError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| self.err(at, format!("unknown variable `{name}`")))
    }

    /// Parses `n` comma-separated arguments and the closing parenthesis.
    fn args<const N: usize>(&mut self, f: &str, at: usize) -> Result<[(Typed, usize); N], ParseError> {
        let mut out: [Option<(Typed, usize)>; N] = core::array::from_fn(|_| None);
        for (i, slot) in out.iter_mut().enumerate() {
            if i > 0 {
                let c = self.skip_ws();
                if self.peek() == Some(')') {
                    return Err(self.err(c, format!("`{f}` takes {N} arguments, found {i}")));
                }
                self.expect(',')?;
            }
            let a = self.skip_ws();
            if self.peek() == Some(')') {
                return Err(self.err(a, format!("`{f}` takes {N} arguments, found {i}")));
            }
            *slot = Some((self.expr()?, a));
        }
        let c = self.skip_ws();
        if self.peek() == Some(',') {
            return Err(self.err(c, format!("`{f}` takes {N} arguments, found more")));
        }
        self.expect(')').map_err(|e| {
            if e.offset >= self.src.len() {
                self.err(at, format!("unclosed `{f}(`"))
            } else {
                e
            }
        })?;
        Ok(out.map(|o| o.expect("filled above")))
    }

    fn scalar(&self, t: Typed, at: usize, f: &str) -> Result<ExprNode, ParseError> {
        match t {
            Typed::Scalar(s) => Ok(s),
            other => Err(self.err(at, format!("`{f}` expects a scalar, found a {}", other.kind()))),
        }
    }

    fn vector(&self, t: Typed, at: usize, f: &str) -> Result<(VecExpr, usize), ParseError> {
        match t {
            Typed::Vector(v, d) => Ok((v, d)),
            other => Err(self.err(at, format!("`{f}` expects a vector, found a {}", other.kind()))),
        }
    }

    fn call(&mut self, f: &str, at: usize) -> Result<Typed, ParseError> {
        match f {
            "add" | "sub" => {
                let [(a, _), (b, pb)] = self.args::<2>(f, at)?;
                match (a, b) {
                    (Typed::Scalar(a), Typed::Scalar(b)) => Ok(Typed::Scalar(if f == "add" {
                        ExprNode::add(a, b)
                    } else {
                        ExprNode::sub(a, b)
                    })),
                    (Typed::Vector(a, da), Typed::Vector(b, db)) => {
                        if da != db {
                            return Err(self.err(pb, format!("`{f}` of a {da}-vector and a {db}-vector")));
                        }
                        let (a, b) = (Box::new(a), Box::new(b));
                        Ok(Typed::Vector(if f == "add" { VecExpr::Add(a, b) } else { VecExpr::Sub(a, b) }, da))
                    }
                    (a, b) => Err(self.err(pb, format!("`{f}` mixes a {} and a {}", a.kind(), b.kind()))),
                }
            }
            "mul" | "div" => {
                let [(a, pa), (b, pb)] = self.args::<2>(f, at)?;
                let a = self.scalar(a, pa, f)?;
                let b = self.scalar(b, pb, f)?;
                Ok(Typed::Scalar(if f == "mul" { ExprNode::mul(a, b) } else { ExprNode::div(a, b) }))
            }
            "neg" => {
                let [(a, pa)] = self.args::<1>(f, at)?;
                Ok(Typed::Scalar(ExprNode::neg(self.scalar(a, pa, f)?)))
            }
            "pow" => {
                let [(a, pa), (n, pn)] = self.args::<2>(f, at)?;
                let a = self.scalar(a, pa, f)?;
                match n {
                    Typed::Scalar(ExprNode::Const(c)) if Float::fract(c) == 0.0 && Float::abs(c) <= 64.0 => {
                        Ok(Typed::Scalar(ExprNode::pow(a, c as i32)))
                    }
                    _ => Err(self.err(pn, "`pow` exponent must be an integer literal in -64..=64")),
                }
            }
            "dot" | "det2" => {
                let [(a, pa), (b, pb)] = self.args::<2>(f, at)?;
                let (a, da) = self.vector(a, pa, f)?;
                let (b, db) = self.vector(b, pb, f)?;
                if da != db {
                    return Err(self.err(pb, format!("`{f}` of a {da}-vector and a {db}-vector")));
                }
                if f == "det2" {
                    if da != 2 {
                        return Err(self.err(pa, format!("`det2` needs planar vectors, found {da}-vectors")));
                    }
                    Ok(Typed::Scalar(ExprNode::Det2(a, b)))
                } else {
                    Ok(Typed::Scalar(ExprNode::Dot(a, b)))
                }
            }
            "norm" => {
                let [(a, pa)] = self.args::<1>(f, at)?;
                let (a, _) = self.vector(a, pa, f)?;
                Ok(Typed::Scalar(ExprNode::Norm(a)))
            }
            other => Err(self.err(at, format!("unknown function `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{default_var_names, ConfigSpec};
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn p(src: &str, dims: &[usize]) -> Result<ExprNode, ParseError> {
        parse_component(src, &default_var_names(dims.len()), dims)
    }

    #[test]
    fn parses_builtin_shapes() {
        assert_eq!(p("det2(sub(y,x), sub(z,x))", &[2, 2, 2]).unwrap(), ExprNode::area(0, 1, 2));
        assert_eq!(
            p("div(norm(sub(x,y)), norm(sub(z,w)))", &[3; 4]).unwrap(),
            ExprNode::div(ExprNode::dist(0, 1), ExprNode::dist(2, 3))
        );
        assert_eq!(
            p("pow(x[2], -3)", &[2, 2]).unwrap(),
            ExprNode::pow(ExprNode::Coord { var: 0, coord: 1 }, -3)
        );
        assert_eq!(
            p(" mul( 2.5e-1 , dot(x, add(y, x)) ) ", &[3, 3]).unwrap(),
            ExprNode::mul(
                ExprNode::Const(0.25),
                ExprNode::Dot(
                    VecExpr::Var(0),
                    VecExpr::Add(Box::new(VecExpr::Var(1)), Box::new(VecExpr::Var(0)))
                )
            )
        );
    }

    #[test]
    fn reports_position_of_type_errors() {
        let e = p("norm(x[1])", &[2, 2]).unwrap_err();
        assert_eq!((e.line, e.column), (1, 6));
        assert!(e.message.contains("expects a vector"), "{e}");

        let e = p("add(x, x[1])", &[2, 2]).unwrap_err();
        assert_eq!(e.column, 8);

        let e = p("det2(x,\n  y)", &[3, 3]).unwrap_err();
        assert_eq!((e.line, e.column), (1, 6));

        let e = p("dot(x,\n   y)", &[2, 3]).unwrap_err();
        assert_eq!((e.line, e.column), (2, 4));
    }

    #[test]
    fn reports_arity_errors() {
        assert!(p("norm(sub(x,y), x)", &[2, 2]).unwrap_err().message.contains("takes 1"));
        assert!(p("det2(x)", &[2, 2]).unwrap_err().message.contains("takes 2"));
        assert!(p("det2(x, y", &[2, 2]).unwrap_err().message.contains("unclosed"));
        assert!(p("foo(x)", &[2, 2]).unwrap_err().message.contains("unknown function"));
        assert!(p("norm(q)", &[2, 2]).unwrap_err().message.contains("unknown variable"));
        assert!(p("x[3]", &[2, 2]).unwrap_err().message.contains("exceeds"));
        assert!(p("x[0]", &[2, 2]).is_err());
        assert!(p("sub(x, y)", &[2, 2]).unwrap_err().message.contains("must be a scalar"));
        assert!(p("norm(x) y", &[2, 2]).unwrap_err().message.contains("trailing"));
        assert!(p("pow(x[1], 1.5)", &[2, 2]).is_err());
    }

    fn arb_vec(k: usize) -> impl Strategy<Value = VecExpr> {
        let leaf = (0..k).prop_map(VecExpr::Var);
        leaf.prop_recursive(3, 8, 2, |inner| {
            (inner.clone(), inner, any::<bool>()).prop_map(|(a, b, add)| {
                if add {
                    VecExpr::Add(Box::new(a), Box::new(b))
                } else {
                    VecExpr::Sub(Box::new(a), Box::new(b))
                }
            })
        })
    }

    fn arb_scalar(k: usize) -> impl Strategy<Value = ExprNode> {
        let leaf = prop_oneof![
            ((0..k), (0usize..2)).prop_map(|(var, coord)| ExprNode::Coord { var, coord }),
            (-1e3f64..1e3).prop_map(ExprNode::Const),
            arb_vec(k).prop_map(ExprNode::Norm),
            (arb_vec(k), arb_vec(k)).prop_map(|(a, b)| ExprNode::Det2(a, b)),
            (arb_vec(k), arb_vec(k)).prop_map(|(a, b)| ExprNode::Dot(a, b)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprNode::add(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprNode::sub(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprNode::mul(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprNode::div(a, b)),
                inner.clone().prop_map(ExprNode::neg),
                (inner, -4i32..5).prop_map(|(a, n)| ExprNode::pow(a, n)),
            ]
        })
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(e in arb_scalar(4)) {
            let spec = ConfigSpec::new("rt", vec![2; 4], vec![e.clone()]).unwrap();
            let text = spec.render(&e);
            let names: Vec<String> = spec.var_names().to_vec();
            let back = parse_component(&text, &names, spec.dims()).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn garbage_never_panics(s in "[a-z0-9(),\\[\\] .-]{0,40}") {
            let _ = p(&s, &[2, 2, 2]);
        }
    }
}

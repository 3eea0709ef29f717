//! Forward-mode scalars carrying first and second derivatives.
//!
//! Expression evaluation is generic over [`Scalar`]: `f64` gives plain values,
//! [`Jet1`] adds the gradient and [`Jet2`] the full symmetric Hessian, all
//! with respect to the flattened `d_tot` input coordinates.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

pub trait Scalar: Sized + Clone {
    fn constant(c: f64, n: usize) -> Self;
    /// Input coordinate `idx` of `n`, holding value `v`.
    fn variable(v: f64, idx: usize, n: usize) -> Self;
    fn value(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Composes a univariate `f` given `f`, `f'`, `f''` at `self.value()`.
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self;

    fn recip(&self) -> Self {
        let a = self.value();
        self.chain(1.0 / a, -1.0 / (a * a), 2.0 / (a * a * a))
    }

    fn sqrt(&self) -> Self {
        let a = self.value();
        let s = Float::sqrt(a);
        self.chain(s, 0.5 / s, -0.25 / (s * a))
    }

    fn powi(&self, n: i32) -> Self {
        let a = self.value();
        let nf = n as f64;
        self.chain(
            Float::powi(a, n),
            nf * Float::powi(a, n - 1),
            nf * (nf - 1.0) * Float::powi(a, n - 2),
        )
    }
}

impl Scalar for f64 {
    fn constant(c: f64, _: usize) -> Self {
        c
    }
    fn variable(v: f64, _: usize, _: usize) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn chain(&self, f0: f64, _: f64, _: f64) -> Self {
        f0
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn sqrt(&self) -> Self {
        Float::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        Float::powi(*self, n)
    }
}

/// Value and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet1 {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl Scalar for Jet1 {
    fn constant(c: f64, n: usize) -> Self {
        Self {
            value: c,
            gradient: vec![0.0; n],
        }
    }

    fn variable(v: f64, idx: usize, n: usize) -> Self {
        let mut j = Self::constant(v, n);
        j.gradient[idx] = 1.0;
        j
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            value: self.value + o.value,
            gradient: zip(&self.gradient, &o.gradient, |a, b| a + b),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        Self {
            value: self.value - o.value,
            gradient: zip(&self.gradient, &o.gradient, |a, b| a - b),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let (a, b) = (self.value, o.value);
        Self {
            value: a * b,
            gradient: zip(&self.gradient, &o.gradient, |ga, gb| a * gb + b * ga),
        }
    }

    fn neg(&self) -> Self {
        Self {
            value: -self.value,
            gradient: self.gradient.iter().map(|g| -g).collect(),
        }
    }

    fn chain(&self, f0: f64, f1: f64, _: f64) -> Self {
        Self {
            value: f0,
            gradient: self.gradient.iter().map(|g| f1 * g).collect(),
        }
    }
}

/// Value, gradient and symmetric Hessian (row-major `n × n`, stored in full).
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

impl Jet2 {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64, n: usize) -> Self {
        Self {
            value: c,
            gradient: vec![0.0; n],
            hessian: vec![0.0; n * n],
        }
    }

    fn variable(v: f64, idx: usize, n: usize) -> Self {
        let mut j = Self::constant(v, n);
        j.gradient[idx] = 1.0;
        j
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            value: self.value + o.value,
            gradient: zip(&self.gradient, &o.gradient, |a, b| a + b),
            hessian: zip(&self.hessian, &o.hessian, |a, b| a + b),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        Self {
            value: self.value - o.value,
            gradient: zip(&self.gradient, &o.gradient, |a, b| a - b),
            hessian: zip(&self.hessian, &o.hessian, |a, b| a - b),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.dim();
        let (a, b) = (self.value, o.value);
        let (ga, gb) = (&self.gradient, &o.gradient);
        let mut hessian = zip(&self.hessian, &o.hessian, |ha, hb| a * hb + b * ha);
        for i in 0..n {
            for j in 0..n {
                hessian[i * n + j] += ga[i] * gb[j] + gb[i] * ga[j];
            }
        }
        Self {
            value: a * b,
            gradient: zip(ga, gb, |x, y| a * y + b * x),
            hessian,
        }
    }

    fn neg(&self) -> Self {
        Self {
            value: -self.value,
            gradient: self.gradient.iter().map(|g| -g).collect(),
            hessian: self.hessian.iter().map(|h| -h).collect(),
        }
    }

    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let n = self.dim();
        let g = &self.gradient;
        let mut hessian: Vec<f64> = self.hessian.iter().map(|h| f1 * h).collect();
        if f2 != 0.0 {
            for i in 0..n {
                for j in 0..n {
                    hessian[i * n + j] += f2 * (g[i] * g[j]);
                }
            }
        }
        Self {
            value: f0,
            gradient: g.iter().map(|x| f1 * x).collect(),
            hessian,
        }
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_second_order() {
        // f = x0 * x1^2 at (2, 3)
        let x0 = Jet2::variable(2.0, 0, 2);
        let x1 = Jet2::variable(3.0, 1, 2);
        let f = x0.mul(&x1.mul(&x1));
        assert_eq!(f.value, 18.0);
        assert_eq!(f.gradient, vec![9.0, 12.0]);
        assert_eq!(f.hessian, vec![0.0, 6.0, 6.0, 4.0]);
    }

    #[test]
    fn sqrt_and_recip_chain() {
        // f = 1 / sqrt(x0) at 4: f' = -1/16, f'' = 3/128
        let x = Jet2::variable(4.0, 0, 1);
        let f = x.sqrt().recip();
        assert!((f.value - 0.5).abs() < 1e-15);
        assert!((f.gradient[0] + 1.0 / 16.0).abs() < 1e-15);
        assert!((f.hessian[0] - 3.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn powi_negative_exponent() {
        let x = Jet1::variable(2.0, 0, 1);
        let f = x.powi(-2);
        assert!((f.value - 0.25).abs() < 1e-15);
        assert!((f.gradient[0] + 0.25).abs() < 1e-15);
    }
}

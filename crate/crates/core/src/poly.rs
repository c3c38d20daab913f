//! Real polynomials in monomial or shifted Chebyshev form, applicable to any
//! unital algebra (banded matrices, Laurent symbols, scalars).

use crate::error::{Error, Result};

/// Minimal ring interface needed to evaluate a polynomial at an element.
pub trait Algebra: Clone {
    fn unit_like(&self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn add_unit(&self, c: f64) -> Self {
        self.add(&self.unit_like().scale(c))
    }
}

impl Algebra for f64 {
    fn unit_like(&self) -> Self {
        1.0
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Monomial,
    /// Chebyshev polynomials of the first kind on `[lo, hi]`.
    Chebyshev { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
    basis: Basis,
}

impl Polynomial {
    /// `coeffs[k]` multiplies `x^k`.
    pub fn monomial(coeffs: Vec<f64>) -> Self {
        let mut p = Polynomial {
            coeffs,
            basis: Basis::Monomial,
        };
        p.trim();
        p
    }

    pub fn chebyshev(coeffs: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "chebyshev interval [{lo}, {hi}] is empty"
            )));
        }
        let mut p = Polynomial {
            coeffs,
            basis: Basis::Chebyshev { lo, hi },
        };
        p.trim();
        Ok(p)
    }

    /// Interpolate `f` at `degree + 1` Chebyshev points of `[lo, hi]`.
    pub fn chebyshev_fit<F: Fn(f64) -> f64>(f: F, degree: usize, lo: f64, hi: f64) -> Result<Self> {
        let m = degree + 1;
        let vals: Vec<f64> = (0..m)
            .map(|j| {
                let th = std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
                f(0.5 * (hi + lo) + 0.5 * (hi - lo) * th.cos())
            })
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("chebyshev_fit samples".into()));
        }
        let coeffs = (0..m)
            .map(|k| {
                let s: f64 = vals
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / m as f64).cos()
                    })
                    .sum();
                if k == 0 {
                    s / m as f64
                } else {
                    2.0 * s / m as f64
                }
            })
            .collect();
        Polynomial::chebyshev(coeffs, lo, hi)
    }

    pub fn zero() -> Self {
        Polynomial::monomial(vec![])
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&0.0) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.coeffs.iter_mut().for_each(|x| *x *= c);
        p.trim();
        p
    }

    /// Derivative in monomial form. Chebyshev inputs are differentiated in
    /// their own basis.
    pub fn derivative(&self) -> Self {
        match self.basis {
            Basis::Monomial => Polynomial::monomial(
                self.coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| k as f64 * c)
                    .collect(),
            ),
            Basis::Chebyshev { lo, hi } => {
                let n = self.coeffs.len();
                if n <= 1 {
                    return Polynomial::zero();
                }
                let mut d = vec![0.0; n + 1];
                for k in (1..n).rev() {
                    d[k - 1] = d[k + 1] + 2.0 * k as f64 * self.coeffs[k];
                }
                d[0] *= 0.5;
                d.truncate(n - 1);
                let s = 2.0 / (hi - lo);
                d.iter_mut().for_each(|x| *x *= s);
                Polynomial {
                    coeffs: d,
                    basis: self.basis.clone(),
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.apply(&x)
    }

    /// Evaluate at an algebra element by Horner (monomial) or Clenshaw (Chebyshev).
    pub fn apply<A: Algebra>(&self, x: &A) -> A {
        let unit = x.unit_like();
        if self.coeffs.is_empty() {
            return unit.scale(0.0);
        }
        match self.basis {
            Basis::Monomial => {
                let d = self.coeffs.len() - 1;
                let mut acc = unit.scale(self.coeffs[d]);
                for k in (0..d).rev() {
                    acc = acc.mul(x).add_unit(self.coeffs[k]);
                }
                acc
            }
            Basis::Chebyshev { lo, hi } => {
                let y = x
                    .scale(2.0 / (hi - lo))
                    .add_unit(-(hi + lo) / (hi - lo));
                let zero = unit.scale(0.0);
                let mut b1 = zero.clone();
                let mut b2 = zero;
                for k in (1..self.coeffs.len()).rev() {
                    let b0 = y.mul(&b1).scale(2.0).add(&b2.scale(-1.0)).add_unit(self.coeffs[k]);
                    b2 = b1;
                    b1 = b0;
                }
                y.mul(&b1).add(&b2.scale(-1.0)).add_unit(self.coeffs[0])
            }
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

//! Truncated multivariate Taylor arithmetic.
//!
//! Metric closed forms are written once, generically over [`Scalar`], and
//! evaluated either on plain `f64` or on [`Taylor`] jets. Jets over jets
//! (`Taylor<Taylor<f64>>`) give partial derivatives at a point that is itself
//! a power series, which is how curvature is expanded along normal geodesics.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Ring operations plus the handful of elementary functions the built-in
/// surfaces need.
pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant with the same shape as `self`.
    fn lift(&self, v: f64) -> Self;
    /// Constant term.
    fn value(&self) -> f64;
    fn scale(&self, k: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;
    fn recip(&self) -> Self;

    fn add_f64(&self, v: f64) -> Self {
        self.clone() + self.lift(v)
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn lift(&self, v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
}

/// Truncated Taylor polynomial in one or two variables with total degree at
/// most `order`. Coefficient `(i, j)` multiplies `dx^i dy^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Taylor<T> {
    nvars: usize,
    order: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar> Taylor<T> {
    pub fn constant(value: T, nvars: usize, order: usize) -> Self {
        assert!(nvars == 1 || nvars == 2, "Taylor supports one or two variables");
        let zero = value.lift(0.0);
        let mut coeffs = vec![zero; (order + 1) * (order + 1)];
        coeffs[0] = value;
        Self { nvars, order, coeffs }
    }

    /// The independent variable `var` expanded around `value`.
    pub fn variable(value: T, var: usize, nvars: usize, order: usize) -> Self {
        assert!(var < nvars);
        let one = value.lift(1.0);
        let mut t = Self::constant(value, nvars, order);
        if order >= 1 {
            if var == 0 {
                t.set(1, 0, one);
            } else {
                t.set(0, 1, one);
            }
        }
        t
    }

    /// Univariate polynomial from its coefficients (truncated to `order`).
    pub fn from_coeffs(coeffs: &[T], order: usize) -> Self {
        let mut t = Self::constant(coeffs[0].clone(), 1, order);
        for (i, c) in coeffs.iter().enumerate().take(order + 1).skip(1) {
            t.set(i, 0, c.clone());
        }
        t
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.order + 1) + j
    }

    pub fn coeff(&self, i: usize, j: usize) -> &T {
        &self.coeffs[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.coeffs[k] = v;
    }

    /// Partial derivative `∂x^i ∂y^j` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> T {
        self.coeff(i, j).scale(factorial(i) * factorial(j))
    }

    /// Univariate coefficients `c_0..=c_order`.
    pub fn univariate(&self) -> Vec<T> {
        (0..=self.order).map(|i| self.coeff(i, 0).clone()).collect()
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(&T, &T) -> T) -> Self {
        assert_eq!(
            (self.nvars, self.order),
            (rhs.nvars, rhs.order),
            "Taylor shape mismatch"
        );
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| f(a, b)).collect();
        Self { nvars: self.nvars, order: self.order, coeffs }
    }

    fn map(&self, f: impl Fn(&T) -> T) -> Self {
        Self {
            nvars: self.nvars,
            order: self.order,
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }

    fn mul_ref(&self, rhs: &Self) -> Self {
        assert_eq!((self.nvars, self.order), (rhs.nvars, rhs.order), "Taylor shape mismatch");
        let n = self.order;
        let zero = self.coeffs[0].lift(0.0);
        let mut out = Self { nvars: self.nvars, order: n, coeffs: vec![zero; self.coeffs.len()] };
        let jmax = if self.nvars == 2 { n } else { 0 };
        for i in 0..=n {
            for j in 0..=jmax.min(n - i) {
                let mut acc: Option<T> = None;
                for p in 0..=i {
                    for q in 0..=j {
                        let term = self.coeff(p, q).clone() * rhs.coeff(i - p, j - q).clone();
                        acc = Some(match acc {
                            None => term,
                            Some(a) => a + term,
                        });
                    }
                }
                out.set(i, j, acc.expect("nonempty sum"));
            }
        }
        out
    }

    /// `f(self)` from the derivatives `f^(k)(a0)` of `f` at the constant term.
    fn compose(&self, derivs: Vec<T>) -> Self {
        let a0 = self.coeffs[0].clone();
        let mut delta = self.clone();
        delta.set(0, 0, a0.lift(0.0));
        let mut out = Self::constant(derivs[0].clone(), self.nvars, self.order);
        let mut power = Self::constant(a0.lift(1.0), self.nvars, self.order);
        for (k, d) in derivs.iter().enumerate().skip(1) {
            power = power.mul_ref(&delta);
            let c = d.scale(1.0 / factorial(k));
            out = out + power.map(|p| p.clone() * c.clone());
        }
        out
    }

    fn deriv_count(&self) -> usize {
        self.order + 1
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

impl<T: Scalar> Add for Taylor<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a.clone() + b.clone())
    }
}

impl<T: Scalar> Sub for Taylor<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a.clone() - b.clone())
    }
}

impl<T: Scalar> Mul for Taylor<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.mul_ref(&rhs)
    }
}

impl<T: Scalar> Div for Taylor<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self.mul_ref(&rhs.recip())
    }
}

impl<T: Scalar> Neg for Taylor<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|a| -a.clone())
    }
}

impl<T: Scalar> Scalar for Taylor<T> {
    fn lift(&self, v: f64) -> Self {
        Self::constant(self.coeffs[0].lift(v), self.nvars, self.order)
    }

    fn value(&self) -> f64 {
        self.coeffs[0].value()
    }

    fn scale(&self, k: f64) -> Self {
        self.map(|a| a.scale(k))
    }

    fn sin(&self) -> Self {
        let a0 = &self.coeffs[0];
        let (s, c) = (a0.sin(), a0.cos());
        let d = (0..self.deriv_count())
            .map(|k| match k % 4 {
                0 => s.clone(),
                1 => c.clone(),
                2 => -s.clone(),
                _ => -c.clone(),
            })
            .collect();
        self.compose(d)
    }

    fn cos(&self) -> Self {
        let a0 = &self.coeffs[0];
        let (s, c) = (a0.sin(), a0.cos());
        let d = (0..self.deriv_count())
            .map(|k| match k % 4 {
                0 => c.clone(),
                1 => -s.clone(),
                2 => -c.clone(),
                _ => s.clone(),
            })
            .collect();
        self.compose(d)
    }

    fn exp(&self) -> Self {
        let e = self.coeffs[0].exp();
        self.compose(vec![e; self.deriv_count()])
    }

    fn sqrt(&self) -> Self {
        let a0 = self.coeffs[0].clone();
        let s = a0.sqrt();
        let inv = a0.recip();
        let mut d = Vec::with_capacity(self.deriv_count());
        let mut cur = s;
        for k in 0..self.deriv_count() {
            d.push(cur.clone());
            cur = cur * inv.clone().scale(0.5 - k as f64);
        }
        self.compose(d)
    }

    fn sinh(&self) -> Self {
        let a0 = &self.coeffs[0];
        let (s, c) = (a0.sinh(), a0.cosh());
        let d = (0..self.deriv_count())
            .map(|k| if k % 2 == 0 { s.clone() } else { c.clone() })
            .collect();
        self.compose(d)
    }

    fn cosh(&self) -> Self {
        let a0 = &self.coeffs[0];
        let (s, c) = (a0.sinh(), a0.cosh());
        let d = (0..self.deriv_count())
            .map(|k| if k % 2 == 0 { c.clone() } else { s.clone() })
            .collect();
        self.compose(d)
    }

    fn recip(&self) -> Self {
        let inv = self.coeffs[0].recip();
        let mut d = Vec::with_capacity(self.deriv_count());
        let mut cur = inv.clone();
        for k in 0..self.deriv_count() {
            d.push(cur.clone());
            cur = cur * inv.clone().scale(-((k + 1) as f64));
        }
        self.compose(d)
    }
}

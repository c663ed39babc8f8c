//! Chebyshev series on an interval, used to store beam coefficients as
//! smooth functions of the arclength parameter.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cheb {
    pub lo: f64,
    pub hi: f64,
    /// Coefficients of `T_0..T_n` in the mapped variable.
    pub coeffs: Vec<Complex64>,
}

/// Chebyshev–Lobatto nodes on `[lo, hi]`, ordered from `hi` down to `lo`.
pub fn lobatto_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| {
            let x = (PI * j as f64 / n as f64).cos();
            0.5 * (hi + lo) + 0.5 * (hi - lo) * x
        })
        .collect()
}

/// Degree heuristic for an interval of length `len`.
pub fn default_degree(len: f64) -> usize {
    ((32.0 + 16.0 * len).round() as usize).clamp(48, 256)
}

impl Cheb {
    /// Interpolant through values at [`lobatto_nodes`].
    pub fn from_values(lo: f64, hi: f64, vals: &[Complex64]) -> Self {
        let n = vals.len() - 1;
        assert!(n >= 1, "need at least two nodes");
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                acc += v * (w * (PI * (k * j) as f64 / n as f64).cos());
            }
            let scale = if k == 0 || k == n { 1.0 } else { 2.0 };
            *c = acc * (scale / n as f64);
        }
        Self { lo, hi, coeffs }
    }

    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Self {
        let vals: Vec<_> = lobatto_nodes(lo, hi, n).into_iter().map(f).collect();
        Self::from_values(lo, hi, &vals)
    }

    pub fn constant(lo: f64, hi: f64, n: usize, v: Complex64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
        coeffs[0] = v;
        Self { lo, hi, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn nodes(&self) -> Vec<f64> {
        lobatto_nodes(self.lo, self.hi, self.degree())
    }

    pub fn node_values(&self) -> Vec<Complex64> {
        self.nodes().into_iter().map(|t| self.eval(t)).collect()
    }

    fn to_unit(&self, t: f64) -> f64 {
        (2.0 * t - self.lo - self.hi) / (self.hi - self.lo)
    }

    /// Clenshaw evaluation. Points slightly outside the interval are
    /// extrapolated, which stays accurate for a tiny overshoot.
    pub fn eval(&self, t: f64) -> Complex64 {
        let x = self.to_unit(t);
        let mut b1 = Complex64::new(0.0, 0.0);
        let mut b2 = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + b1 * (2.0 * x) - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + b1 * x - b2
    }

    pub fn deriv(&self) -> Self {
        let n = self.degree();
        let mut d = vec![Complex64::new(0.0, 0.0); n + 2];
        for k in (1..=n).rev() {
            d[k - 1] = d[k + 1] + self.coeffs[k] * (2.0 * k as f64);
        }
        d[0] *= 0.5;
        d.truncate(n + 1);
        let s = 2.0 / (self.hi - self.lo);
        Self { lo: self.lo, hi: self.hi, coeffs: d.into_iter().map(|c| c * s).collect() }
    }

    /// Antiderivative that vanishes at `t0`.
    pub fn antideriv(&self, t0: f64) -> Self {
        let n = self.degree();
        let c = &self.coeffs;
        let get = |k: usize| if k <= n { c[k] } else { Complex64::new(0.0, 0.0) };
        let mut a = vec![Complex64::new(0.0, 0.0); n + 2];
        a[1] = get(0) - get(2) * 0.5;
        for k in 2..=n + 1 {
            a[k] = (get(k - 1) - get(k + 1)) / (2.0 * k as f64);
        }
        // Keep the degree fixed: the discarded top term is at truncation level.
        a.truncate(n + 1);
        let s = 0.5 * (self.hi - self.lo);
        let mut out =
            Self { lo: self.lo, hi: self.hi, coeffs: a.into_iter().map(|v| v * s).collect() };
        let shift = out.eval(t0);
        out.coeffs[0] -= shift;
        out
    }

    /// Pointwise combination through node values.
    pub fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let n = self.degree().max(other.degree());
        let nodes = lobatto_nodes(self.lo, self.hi, n);
        let vals: Vec<_> = nodes.iter().map(|&t| f(self.eval(t), other.eval(t))).collect();
        Self::from_values(self.lo, self.hi, &vals)
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        let nodes = self.nodes();
        let vals: Vec<_> = nodes.iter().map(|&t| f(t, self.eval(t))).collect();
        Self::from_values(self.lo, self.hi, &vals)
    }

    pub fn sup_norm(&self) -> f64 {
        self.node_values().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Magnitude of the trailing coefficients, a cheap resolution check.
    pub fn tail(&self) -> f64 {
        let n = self.degree();
        self.coeffs[n.saturating_sub(3)..].iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// A Chebyshev series re-expanded on short panels of low degree, for cheap
/// repeated evaluation. Panels are short enough that singularities at
/// distance of order one from the real axis leave roundoff-level error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseCheb {
    lo: f64,
    width: f64,
    panels: Vec<Cheb>,
}

/// Panel length and degree used by [`PiecewiseCheb::from_cheb`].
pub const PANEL_WIDTH: f64 = 0.5;
pub const PANEL_DEGREE: usize = 16;

impl PiecewiseCheb {
    pub fn from_cheb(ch: &Cheb) -> Self {
        let n = ((ch.hi - ch.lo) / PANEL_WIDTH).ceil().max(1.0) as usize;
        let width = (ch.hi - ch.lo) / n as f64;
        let panels = (0..n)
            .map(|k| {
                let a = ch.lo + width * k as f64;
                Cheb::from_fn(a, a + width, PANEL_DEGREE, |t| ch.eval(t))
            })
            .collect();
        Self { lo: ch.lo, width, panels }
    }

    /// Points outside the interval are extrapolated from the end panels.
    pub fn eval(&self, t: f64) -> Complex64 {
        let k = ((t - self.lo) / self.width).floor().clamp(0.0, (self.panels.len() - 1) as f64) as usize;
        self.panels[k].eval(t)
    }
}

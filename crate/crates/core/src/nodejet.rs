//! Functions `u(t, y) = Σ_j u_j(t) y^j` truncated in `y`, stored as values
//! of each `u_j` at shared Chebyshev–Lobatto nodes in `t`.

use crate::cheb::{lobatto_nodes, Cheb};
use num_complex::Complex64;

/// Relative size below which trailing Chebyshev coefficients count as noise.
pub const CHOP_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct NodeGrid {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
}

impl NodeGrid {
    pub fn new(lo: f64, hi: f64, degree: usize) -> Self {
        Self { lo, hi, nodes: lobatto_nodes(lo, hi, degree) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cheb(&self, vals: &[Complex64]) -> Cheb {
        Cheb::from_values(self.lo, self.hi, vals)
    }

    /// Interpolant with trailing coefficients below the roundoff floor
    /// removed, so that differentiation does not amplify noise.
    pub fn chopped(&self, vals: &[Complex64]) -> Cheb {
        let mut ch = self.cheb(vals);
        let scale = ch.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let floor = CHOP_TOL * scale;
        let keep = ch.coeffs.iter().rposition(|c| c.norm() > floor).map_or(0, |k| k + 1);
        for c in ch.coeffs.iter_mut().skip(keep) {
            *c = Complex64::new(0.0, 0.0);
        }
        ch
    }

    /// Solves `2u' + κ u = g` with `u(0) = u0` through the integrating
    /// factor `exp(½∫κ)`.
    pub fn solve_linear(&self, kappa: &[Complex64], g: &[Complex64], u0: Complex64) -> Vec<Complex64> {
        let half: Vec<Complex64> = kappa.iter().map(|k| k * 0.5).collect();
        let int = self.cheb(&half).antideriv(0.0).node_values();
        let e: Vec<Complex64> = int.iter().map(|v| v.exp()).collect();
        let w: Vec<Complex64> = e.iter().zip(g).map(|(e, g)| e * g * 0.5).collect();
        let wint = self.cheb(&w).antideriv(0.0).node_values();
        e.iter().zip(&wint).map(|(e, wi)| (u0 + wi) / e).collect()
    }

    pub fn deriv(&self, vals: &[Complex64]) -> Vec<Complex64> {
        self.chopped(vals).deriv().node_values()
    }
}

#[derive(Clone, Debug)]
pub struct NodeJet {
    /// `c[j][i]` is `u_j` at node `i`.
    pub c: Vec<Vec<Complex64>>,
}

fn zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

impl NodeJet {
    pub fn zero(order: usize, n: usize) -> Self {
        Self { c: vec![zeros(n); order + 1] }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn n(&self) -> usize {
        self.c[0].len()
    }

    pub fn truncate(&self, order: usize) -> Self {
        let n = self.n();
        Self { c: (0..=order).map(|j| self.c.get(j).cloned().unwrap_or_else(|| zeros(n))).collect() }
    }

    pub fn get(&self, j: usize) -> Option<&Vec<Complex64>> {
        self.c.get(j)
    }

    pub fn add(&self, o: &Self) -> Self {
        let order = self.order().max(o.order());
        let n = self.n();
        let z = zeros(n);
        Self {
            c: (0..=order)
                .map(|j| {
                    let a = self.c.get(j).unwrap_or(&z);
                    let b = o.c.get(j).unwrap_or(&z);
                    a.iter().zip(b).map(|(x, y)| x + y).collect()
                })
                .collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { c: self.c.iter().map(|v| v.iter().map(|x| x * s).collect()).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Truncated product to `order`.
    pub fn mul(&self, o: &Self, order: usize) -> Self {
        let n = self.n();
        let mut out = Self::zero(order, n);
        for (j, oj) in out.c.iter_mut().enumerate() {
            for p in 0..=j {
                let (Some(a), Some(b)) = (self.c.get(p), o.c.get(j - p)) else { continue };
                for i in 0..n {
                    oj[i] += a[i] * b[i];
                }
            }
        }
        out
    }

    pub fn dy(&self) -> Self {
        let n = self.n();
        let order = self.order();
        let mut c: Vec<Vec<Complex64>> = (1..=order)
            .map(|j| self.c[j].iter().map(|x| x * j as f64).collect())
            .collect();
        if c.is_empty() {
            c.push(zeros(n));
        }
        Self { c }
    }

    pub fn dt(&self, grid: &NodeGrid) -> Self {
        Self { c: self.c.iter().map(|v| grid.deriv(v)).collect() }
    }

    /// Value at node `i` and transverse offset `y`.
    pub fn eval_node(&self, i: usize, y: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for v in self.c.iter().rev() {
            acc = acc * y + v[i];
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

//! Amplitude hierarchy of a beam.
//!
//! With `s = 1/h + iλ` and an exact eikonal phase, conjugating
//! `P = −h²Δ − (hs)²` by `e^{isφ}` leaves `−[ih 𝒯 + h²(Δ − λ𝒯)]`, where
//! `𝒯 = L0 + Δφ` and `L0 u = 2⟨dφ, du⟩`. Collecting powers of `h` in
//! `a = Σ h^k a_k` gives the transport hierarchy
//!
//! ```text
//! 𝒯 a_0 = 0,    𝒯 a_k = −i(−Δ a_{k−1} + λ 𝒯 a_{k−1}),
//! ```
//!
//! and after `N` terms the defect is `h^{N+2} (Δ − λ𝒯) a_N`.

use crate::beam_phase::PhaseJet;
use crate::cheb::{Cheb, PiecewiseCheb};
use crate::error::{invalid, Error, Result};
use crate::nodejet::{NodeGrid, NodeJet};
use crate::taylor::{Scalar, Taylor};
use num_complex::Complex64;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// Lower bound on the symbol constant, so that truncation stays finite.
pub const SYMBOL_CONSTANT_MIN: f64 = 1e-2;

/// Precomputed coefficient jets of the transport operators.
struct Operators {
    order: usize,
    grid: NodeGrid,
    a: NodeJet,
    a_t: NodeJet,
    jy_over_j: NodeJet,
    a_phi_t: NodeJet,
    phi_y: NodeJet,
    lap_phi: NodeJet,
}

impl Operators {
    fn new(pj: &PhaseJet, order: usize) -> Self {
        let grid = pj.grid.clone();
        let a = pj.a.truncate(order);
        let a_t = a.dt(&grid);
        let n = grid.len();
        let mut jy_over_j = NodeJet::zero(order, n);
        let jorder = pj.j.order();
        for i in 0..n {
            let jc: Vec<f64> = pj.j.c.iter().map(|v| v[i].re).collect();
            let tj = Taylor::from_coeffs(&jc, jorder);
            let dj: Vec<f64> = (0..jorder).map(|k| jc[k + 1] * (k + 1) as f64).chain([0.0]).collect();
            let q = (Taylor::from_coeffs(&dj, jorder) * tj.recip()).univariate();
            for k in 0..=order {
                jy_over_j.c[k][i] = c(q[k]);
            }
        }
        let phi_t = pj.phi_t.truncate(order + 1);
        let phi_y = pj.phi.dy().truncate(order);
        let phi_yy = pj.phi.dy().dy().truncate(order);
        let a_phi_t = a.mul(&phi_t, order);
        let lap_phi = a
            .mul(&pj.phi_tt, order)
            .add(&a_t.mul(&phi_t, order).scale(c(0.5)))
            .add(&phi_yy)
            .add(&jy_over_j.mul(&phi_y, order));
        Self { order, grid, a, a_t, jy_over_j, a_phi_t, phi_y, lap_phi }
    }

    /// `𝒯 u = 2(A φ_t u_t + φ_y u_y) + Δφ u`.
    fn transport(&self, u: &NodeJet) -> NodeJet {
        let k = self.order;
        let ut = u.dt(&self.grid);
        let uy = u.dy();
        self.a_phi_t
            .mul(&ut, k)
            .add(&self.phi_y.mul(&uy, k))
            .scale(c(2.0))
            .add(&self.lap_phi.mul(u, k))
    }

    /// `Δu = A u_tt + ½ A_t u_t + u_yy + (J_y/J) u_y`.
    fn laplacian(&self, u: &NodeJet) -> NodeJet {
        let k = self.order;
        let ut = u.dt(&self.grid);
        let utt = ut.dt(&self.grid);
        let uy = u.dy();
        self.a
            .mul(&utt, k)
            .add(&self.a_t.mul(&ut, k).scale(c(0.5)))
            .add(&uy.dy().truncate(k))
            .add(&self.jy_over_j.mul(&uy, k))
    }

    fn source(&self, prev: &NodeJet, lambda: f64) -> NodeJet {
        self.laplacian(prev)
            .scale(c(-1.0))
            .add(&self.transport(prev).scale(c(lambda)))
            .scale(-I)
    }
}

/// Amplitude jets `a_k(t, y) = Σ_j a_k^{(j)}(t) y^j` for `k = 0..=n_terms`.
#[derive(Clone, Debug)]
pub struct AmplitudeJet {
    pub lambda: f64,
    /// Transverse truncation order.
    pub order: usize,
    pub n_terms: usize,
    pub grid: NodeGrid,
    pub terms: Vec<NodeJet>,
    /// Largest `|𝒯 a_k − R_k|` over the nodes.
    pub transport_residual: f64,
    /// `(Δ − λ𝒯) a_N`, the coefficient of the leftover defect.
    pub defect: NodeJet,
    cheb: Vec<Vec<[Cheb; 3]>>,
    fast: Vec<Vec<PiecewiseCheb>>,
}

/// Transport hierarchy along `pj` with transverse order `order` and
/// `n_terms + 1` terms. Initial data: `a_0 = 1`, `a_k = 0` on `t = 0`.
pub fn transport(pj: &PhaseJet, order: usize, n_terms: usize, lambda: f64) -> Result<AmplitudeJet> {
    if pj.order < order + 1 {
        return invalid(format!(
            "amplitude order {order} needs phase order ≥ {}, got {}",
            order + 1,
            pj.order
        ));
    }
    if !lambda.is_finite() {
        return invalid("λ must be finite");
    }
    let ops = Operators::new(pj, order);
    let grid = ops.grid.clone();
    let n = grid.len();
    let m: Vec<C> = pj.phi.c[2].iter().map(|v| v * 2.0).collect();
    let mut terms: Vec<NodeJet> = Vec::with_capacity(n_terms + 1);
    let mut resid: f64 = 0.0;
    for k in 0..=n_terms {
        let rhs = if k == 0 { NodeJet::zero(order, n) } else { ops.source(&terms[k - 1], lambda) };
        let mut u = NodeJet::zero(order, n);
        for j in 0..=order {
            let lower = ops.transport(&u);
            let g: Vec<C> = rhs.c[j].iter().zip(&lower.c[j]).map(|(r, l)| r - l).collect();
            let kappa: Vec<C> = m.iter().map(|v| v * (2 * j + 1) as f64).collect();
            let u0 = if k == 0 && j == 0 { c(1.0) } else { c(0.0) };
            u.c[j] = grid.solve_linear(&kappa, &g, u0);
        }
        let check = ops.transport(&u).sub(&rhs);
        let scale = rhs.max_abs().max(1.0);
        resid = resid.max(check.max_abs() / scale);
        if u.c.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite amplitude term a_{k}")));
        }
        terms.push(u);
    }
    let last = terms.last().expect("at least one term");
    let defect = ops.laplacian(last).sub(&ops.transport(last).scale(c(lambda)));
    let cheb: Vec<Vec<[Cheb; 3]>> = terms
        .iter()
        .map(|u| {
            u.c.iter()
                .map(|v| {
                    let f = grid.cheb(v);
                    let d = f.deriv();
                    let dd = d.deriv();
                    [f, d, dd]
                })
                .collect()
        })
        .collect();
    let fast = cheb.iter().map(|col| col.iter().map(|c| PiecewiseCheb::from_cheb(&c[0])).collect()).collect();
    Ok(AmplitudeJet { lambda, order, n_terms, grid, terms, transport_residual: resid, defect, cheb, fast })
}

/// Sup norms of the coefficients of `h^1, …, h^{N+2}` left after applying
/// the conjugated operator to `Σ h^k a_k`. All but the last should vanish.
pub fn hierarchy_check(pj: &PhaseJet, amp: &AmplitudeJet) -> Vec<f64> {
    let ops = Operators::new(pj, amp.order);
    let (t1, t2) = pj.frame.path.interior_range();
    let inside: Vec<usize> =
        (0..ops.grid.len()).filter(|&i| ops.grid.nodes[i] >= t1 && ops.grid.nodes[i] <= t2).collect();
    let sup = |u: &NodeJet| {
        u.c.iter().flat_map(|v| inside.iter().map(move |&i| v[i].norm())).fold(0.0, f64::max)
    };
    let t: Vec<NodeJet> = amp.terms.iter().map(|u| ops.transport(u)).collect();
    let l: Vec<NodeJet> = amp.terms.iter().map(|u| ops.laplacian(u)).collect();
    let rest = |k: usize| l[k].sub(&t[k].scale(c(amp.lambda)));
    let mut out = vec![sup(&t[0].scale(I))];
    for k in 1..=amp.n_terms {
        out.push(sup(&t[k].scale(I).add(&rest(k - 1))));
    }
    out.push(sup(&rest(amp.n_terms)));
    out
}

/// Truncated sum `Σ_{k≤n} h^k a_k` and its derivatives at one point.
#[derive(Clone, Copy, Debug, Default)]
pub struct AmpDerivs {
    pub v: C,
    pub t: C,
    pub tt: C,
    pub y: C,
    pub yy: C,
    pub ty: C,
}

/// Coefficients in `y` of the summed amplitude and its `t` derivatives at a fixed time.
#[derive(Clone, Debug)]
pub struct AmpColumn {
    pub v: Vec<C>,
    pub t: Vec<C>,
    pub tt: Vec<C>,
}

impl AmpColumn {
    pub fn at(&self, y: f64) -> AmpDerivs {
        let horner = |cs: &[C], d: usize| -> C {
            let mut acc = c(0.0);
            for (j, v) in cs.iter().enumerate().rev() {
                if j < d {
                    break;
                }
                let f: f64 = (0..d).map(|i| (j - i) as f64).product();
                acc = acc * y + v * f;
            }
            acc
        };
        AmpDerivs {
            v: horner(&self.v, 0),
            t: horner(&self.t, 0),
            tt: horner(&self.tt, 0),
            y: horner(&self.v, 1),
            yy: horner(&self.v, 2),
            ty: horner(&self.t, 1),
        }
    }
}

impl AmplitudeJet {
    /// Coefficient `a_k^{(j)}(t)`.
    pub fn coeff(&self, k: usize, j: usize, t: f64) -> C {
        self.cheb[k][j][0].eval(t)
    }

    /// `Σ_{k≤n} h^k a_k` as a polynomial in `y` at time `t`.
    pub fn column(&self, t: f64, h: f64, n: usize) -> AmpColumn {
        let n = n.min(self.n_terms);
        let mut col = AmpColumn {
            v: vec![c(0.0); self.order + 1],
            t: vec![c(0.0); self.order + 1],
            tt: vec![c(0.0); self.order + 1],
        };
        let mut hk = 1.0;
        for k in 0..=n {
            for j in 0..=self.order {
                let [f, d, dd] = &self.cheb[k][j];
                col.v[j] += f.eval(t) * hk;
                col.t[j] += d.eval(t) * hk;
                col.tt[j] += dd.eval(t) * hk;
            }
            hk *= h;
        }
        col
    }

    /// `Σ_{k≤n} h^k a_k(t, y)` without derivatives.
    pub fn value(&self, t: f64, y: f64, h: f64, n: usize) -> C {
        let n = n.min(self.n_terms);
        let mut acc = c(0.0);
        let mut hk = 1.0;
        for k in 0..=n {
            let col = self.fast[k].iter().rev().fold(c(0.0), |a, ch| a * y + ch.eval(t));
            acc += col * hk;
            hk *= h;
        }
        acc
    }

    /// `sup |a_k(t, y)|` over the nodes in `[t_lo, t_hi]` and `|y| ≤ y_max`.
    pub fn sup_norms(&self, t_lo: f64, t_hi: f64, y_max: f64) -> Vec<f64> {
        let ys: Vec<f64> = (0..=20).map(|i| -y_max + y_max * i as f64 / 10.0).collect();
        self.terms
            .iter()
            .map(|u| {
                let mut s: f64 = 0.0;
                for (i, &t) in self.grid.nodes.iter().enumerate() {
                    if t < t_lo || t > t_hi {
                        continue;
                    }
                    for &y in &ys {
                        s = s.max(u.eval_node(i, y).norm());
                    }
                }
                s
            })
            .collect()
    }
}

/// `C = max(C_min, max_k (sup|a_k| / k^k)^{1/(k+1)})`, the constant in
/// `|a_k| ≤ C^{k+1} k^k`.
pub fn symbol_constant(sups: &[f64]) -> f64 {
    sups.iter()
        .enumerate()
        .map(|(k, &s)| {
            let kk = if k == 0 { 1.0 } else { (k as f64).powi(k as i32) };
            (s / kk).powf(1.0 / (k + 1) as f64)
        })
        .fold(SYMBOL_CONSTANT_MIN, f64::max)
}

/// Number of amplitude terms `N(h) = ⌊1/(h e C)⌋`, clamped to `[0, n_max]`.
pub fn truncation(h: f64, constant: f64, n_max: usize) -> usize {
    let n = (1.0 / (h * std::f64::consts::E * constant)).floor();
    if n.is_finite() && n > 0.0 {
        (n as usize).min(n_max)
    } else {
        0
    }
}

/// Closed-form amplitudes for the flat complex-source phase: every
/// `a_k = Σ_{m≤k} d_{k,m} ρ^{−1/2−m}` with `ρ = r/(−ib)`.
#[derive(Clone, Debug)]
pub struct ExactFlatAmplitude {
    pub b: f64,
    pub lambda: f64,
    /// `d[k][m]` for `m = 0..=k`.
    pub d: Vec<Vec<C>>,
}

impl ExactFlatAmplitude {
    pub fn new(b: f64, lambda: f64, n_terms: usize) -> Self {
        let mut d: Vec<Vec<C>> = vec![vec![c(1.0)]];
        let w = C::new(0.0, -b);
        for k in 1..=n_terms {
            let prev = &d[k - 1];
            let get = |m: usize| prev.get(m).copied().unwrap_or(c(0.0));
            let mut row = vec![c(0.0); k + 1];
            for (p, slot) in row.iter_mut().enumerate().skip(1) {
                let pf = p as f64;
                let bracket = -(pf - 0.5).powi(2) * get(p - 1) / w - get(p) * (2.0 * pf * lambda);
                *slot = -I / (-2.0 * pf) * bracket;
            }
            d.push(row);
        }
        Self { b, lambda, d }
    }

    pub fn n_terms(&self) -> usize {
        self.d.len() - 1
    }

    fn w(&self) -> C {
        C::new(0.0, -self.b)
    }

    /// Value, `∂_r` and `∂_r²` of `Σ_{k≤n} h^k a_k` at complex distance `r`.
    pub fn radial(&self, r: C, h: f64, n: usize) -> [C; 3] {
        let w = self.w();
        let rho = r / w;
        let root = rho.sqrt().inv();
        let mut out = [c(0.0); 3];
        let mut hk = 1.0;
        for row in self.d.iter().take(n + 1) {
            for (m, dm) in row.iter().enumerate() {
                let q = -0.5 - m as f64;
                let base = root * rho.powi(-(m as i32));
                out[0] += dm * base * hk;
                out[1] += dm * base / rho * (q / w) * hk;
                out[2] += dm * base / (rho * rho) * (q * (q - 1.0) / (w * w)) * hk;
            }
            hk *= h;
        }
        out
    }

    /// Single term `a_k` at complex distance `r`.
    pub fn term(&self, k: usize, r: C) -> C {
        let rho = r / self.w();
        let root = rho.sqrt().inv();
        self.d[k].iter().enumerate().map(|(m, dm)| dm * root * rho.powi(-(m as i32))).sum()
    }

    /// `(Δ − λ𝒯) a_n` evaluated without cancellation.
    pub fn defect(&self, r: C, n: usize) -> C {
        let w = self.w();
        let rho = r / w;
        let root = rho.sqrt().inv();
        self.d[n]
            .iter()
            .enumerate()
            .map(|(m, dm)| {
                let q = -0.5 - m as f64;
                let base = root * rho.powi(-(m as i32));
                dm * base * (q * q / (rho * rho * w * w) - self.lambda * (2.0 * q + 1.0) / (rho * w))
            })
            .sum()
    }
}

//! Complex phases of Gaussian beams.
//!
//! In Fermi coordinates the phase is `φ(t, y) = t + Σ_{m=2}^{K} φ_m(t) y^m`.
//! The eikonal equation `A φ_t² + φ_y² = 1`, with `A = 1/J²`, splits by powers
//! of `y` into ODEs for the coefficients. Order two is the Riccati equation
//! `M' = −M² − K` for `M = 2 φ_2`. Higher orders are linear in the new
//! coefficient once the lower ones are known.

use crate::cheb::{default_degree, Cheb, PiecewiseCheb};
use crate::error::{invalid, Error, Result};
use crate::fermi::FermiFrame;
use crate::geodesic::FINE_STEP;
use crate::nodejet::{NodeGrid, NodeJet};
use crate::ode::rk4_at_times;
use crate::taylor::{Scalar, Taylor};
use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;

type C = Complex64;

const fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// Values and first two derivatives of a phase at one Fermi point.
#[derive(Clone, Copy, Debug)]
pub struct PhaseDerivs {
    pub phi: C,
    pub phi_t: C,
    pub phi_y: C,
    pub phi_tt: C,
    pub phi_ty: C,
    pub phi_yy: C,
}

/// Transverse Hessian data from the linearized Hamiltonian flow.
#[derive(Clone, Debug)]
pub struct HessianFlow {
    pub times: Vec<f64>,
    /// Second derivatives of `φ` in chart coordinates.
    pub m_chart: Vec<Matrix2<C>>,
    /// `⟨∇²φ e, e⟩`, the normal–normal component of the covariant Hessian.
    pub m_perp: Vec<C>,
    /// Condition number of the `A` block of the Lagrangian frame.
    pub cond: Vec<f64>,
}

/// Condition numbers beyond this mean the frame has degenerated.
pub const MAX_FRAME_CONDITION: f64 = 1e12;

fn cond2(a: &Matrix2<C>) -> f64 {
    let sv = a.singular_values();
    let (hi, lo) = (sv[0].max(sv[1]), sv[0].min(sv[1]));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Propagates the Lagrangian frame `(A; B)` with `M = B A⁻¹` through the
/// linearized geodesic flow in chart coordinates, starting from the
/// transverse Hessian `m0_perp` at `t = 0`.
pub fn hessian_flow(frame: &FermiFrame, m0_perp: C, times: &[f64]) -> Result<HessianFlow> {
    if !(m0_perp.im > 0.0) {
        return invalid(format!("initial Hessian needs positive imaginary part, got {m0_perp}"));
    }
    let chart = frame.chart();
    let s0 = frame.path.state_at(0.0);
    let nu = frame.normal_covector(&s0);
    let gam = chart.christoffel(&s0.x)?;
    let mut m0 = Matrix2::<C>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let mut v = m0_perp * (nu[i] * nu[j]);
            for k in 0..2 {
                v += c(gam[k][i][j] * s0.xi[k]);
            }
            m0[(i, j)] = v;
        }
    }
    let rhs = |_t: f64, v: &[C]| -> Vec<C> {
        let x = [v[0].re, v[1].re];
        let xi = [v[2].re, v[3].re];
        let tx = [Taylor::variable(x[0], 0, 2, 2), Taylor::variable(x[1], 1, 2, 2)];
        let [ga, gb, gc] = chart.cometric_generic(&tx);
        let d = |i: usize, j: usize| {
            Matrix2::new(ga.partial(i, j), gb.partial(i, j), gb.partial(i, j), gc.partial(i, j))
        };
        let g = d(0, 0);
        let dg = [d(1, 0), d(0, 1)];
        let ddg = [[d(2, 0), d(1, 1)], [d(1, 1), d(0, 2)]];
        let xiv = nalgebra::Vector2::new(xi[0], xi[1]);
        let xd = g * xiv;
        let pd = [-0.5 * xiv.dot(&(dg[0] * xiv)), -0.5 * xiv.dot(&(dg[1] * xiv))];
        // H_ξx[i][l] = (∂_l G ξ)_i and H_xx[k][l] = ½ ξ·∂_k∂_l G ξ.
        let mut hxix = Matrix2::<f64>::zeros();
        let mut hxx = Matrix2::<f64>::zeros();
        for l in 0..2 {
            let col = dg[l] * xiv;
            hxix[(0, l)] = col[0];
            hxix[(1, l)] = col[1];
            for k in 0..2 {
                hxx[(k, l)] = 0.5 * xiv.dot(&(ddg[k][l] * xiv));
            }
        }
        let a = Matrix2::new(v[4], v[5], v[6], v[7]);
        let b = Matrix2::new(v[8], v[9], v[10], v[11]);
        let hxix = hxix.map(c);
        let ad = hxix * a + g.map(c) * b;
        let bd = -(hxx.map(c) * a) - hxix.transpose() * b;
        vec![
            c(xd[0]),
            c(xd[1]),
            c(pd[0]),
            c(pd[1]),
            ad[(0, 0)],
            ad[(0, 1)],
            ad[(1, 0)],
            ad[(1, 1)],
            bd[(0, 0)],
            bd[(0, 1)],
            bd[(1, 0)],
            bd[(1, 1)],
        ]
    };
    let y0 = vec![
        c(s0.x[0]),
        c(s0.x[1]),
        c(s0.xi[0]),
        c(s0.xi[1]),
        c(1.0),
        c(0.0),
        c(0.0),
        c(1.0),
        m0[(0, 0)],
        m0[(0, 1)],
        m0[(1, 0)],
        m0[(1, 1)],
    ];
    let states = rk4_at_times(&rhs, 0.0, &y0, times, FINE_STEP);
    let mut out = HessianFlow { times: times.to_vec(), m_chart: vec![], m_perp: vec![], cond: vec![] };
    for (&t, v) in times.iter().zip(&states) {
        let a = Matrix2::new(v[4], v[5], v[6], v[7]);
        let b = Matrix2::new(v[8], v[9], v[10], v[11]);
        let k = cond2(&a);
        if k > MAX_FRAME_CONDITION {
            return Err(Error::Numerical(format!("Lagrangian frame degenerate at t = {t} (cond {k:.3e})")));
        }
        let m = b * a.try_inverse().ok_or_else(|| Error::Numerical(format!("singular frame at t = {t}")))?;
        let x = [v[0].re, v[1].re];
        let xi = [v[2].re, v[3].re];
        let gam = chart.christoffel(&x)?;
        let s = frame.path.state_at(t);
        let e = frame.normal_at(&s);
        let mut mp = C::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                let mut h = m[(i, j)];
                for kk in 0..2 {
                    h -= c(gam[kk][i][j] * xi[kk]);
                }
                mp += h * (e[i] * e[j]);
            }
        }
        out.m_chart.push(m);
        out.m_perp.push(mp);
        out.cond.push(k);
    }
    Ok(out)
}

/// Derivatives `P_m = φ_m'` from the order-`m` eikonal balance, given the
/// metric jets `a[k]` of `1/J²` and the current coefficients `phi[m]`.
fn eikonal_rates(a: &[C], phi: &[C]) -> Vec<C> {
    let k = phi.len() - 1;
    let q: Vec<C> = (0..k).map(|j| phi[j + 1] * (j + 1) as f64).collect();
    let mut p = vec![c(0.0); k + 1];
    for m in 2..=k {
        let mut s = c(0.0);
        for i in 0..=m {
            // [(1 + P)²]_i with P_m still zero.
            let mut u = if i == 0 { c(1.0) } else { p[i] * 2.0 };
            for l in 0..=i {
                u += p[l] * p[i - l];
            }
            s += a[m - i] * u;
        }
        for j in 1..m {
            s += q[j] * q[m - j];
        }
        p[m] = -s * 0.5;
    }
    p
}

/// Beam phase coefficients along a geodesic, stored at Chebyshev nodes.
#[derive(Clone, Debug)]
pub struct PhaseJet {
    pub frame: FermiFrame,
    pub order: usize,
    pub m0: C,
    /// Initial values `φ_m(0)` for `m = 0..=order`.
    pub init: Vec<C>,
    pub grid: NodeGrid,
    /// Coefficient jets of `φ`, `φ_t` and `φ_tt` in powers of `y`.
    pub phi: NodeJet,
    pub phi_t: NodeJet,
    pub phi_tt: NodeJet,
    /// Jets of `J` and of `A = 1/J²` (real, stored as complex).
    pub j: NodeJet,
    pub a: NodeJet,
    cheb_phi: Vec<Cheb>,
    cheb_phi_t: Vec<Cheb>,
    cheb_phi_tt: Vec<Cheb>,
    fast_phi: Vec<PiecewiseCheb>,
}

/// Step of the coefficient ODE march. Small enough that the integration
/// error sits near roundoff, so node values are smooth in `t` and survive
/// spectral differentiation.
pub const PHASE_STEP: f64 = 2.5e-4;

/// Extra transverse orders of `J` kept beyond the phase order.
pub const METRIC_EXTRA_ORDERS: usize = 2;

/// Builds the phase jets of order `order` with `φ_2(0) = m0/2` and
/// `φ_m(0) = psi[m − 3]` for `m ≥ 3` (missing entries are zero).
pub fn phase_jet(frame: &FermiFrame, order: usize, m0: C, psi: &[C]) -> Result<PhaseJet> {
    if order < 2 {
        return invalid(format!("phase order must be at least 2, got {order}"));
    }
    if !(m0.im > 0.0) {
        return invalid(format!("initial Hessian needs positive imaginary part, got {m0}"));
    }
    if psi.len() > order.saturating_sub(2) {
        return invalid(format!("{} higher initial coefficients given for order {order}", psi.len()));
    }
    let chart = frame.chart();
    if chart.jet_order < order + 1 {
        return invalid(format!(
            "missing metric jets: phase order {order} needs chart jet order ≥ {}",
            order + 1
        ));
    }
    let (lo, hi) = (frame.path.t_min(), frame.path.t_max());
    // Higher transverse orders carry higher-order poles off the real axis.
    let grid = NodeGrid::new(lo, hi, (default_degree(hi - lo) + 8 * order).min(384));
    let n = grid.len();
    let jorder = order + METRIC_EXTRA_ORDERS;
    let jvals: Vec<Vec<f64>> = grid.nodes.par_iter().map(|&t| frame.j_jets(t, jorder)).collect();
    let mut j = NodeJet::zero(jorder, n);
    let mut a = NodeJet::zero(jorder, n);
    for (i, jj) in jvals.iter().enumerate() {
        let tj = Taylor::from_coeffs(jj, jorder);
        let inv2 = (tj.clone() * tj).recip().univariate();
        for k in 0..=jorder {
            j.c[k][i] = c(jj[k]);
            a.c[k][i] = c(inv2[k]);
        }
    }
    let a_cheb: Vec<Cheb> = a.c.iter().take(order + 1).map(|v| grid.cheb(v)).collect();

    let mut init = vec![c(0.0); order + 1];
    init[2] = m0 * 0.5;
    for (k, v) in psi.iter().enumerate() {
        init[k + 3] = *v;
    }
    // Order two is the nonlinear Riccati equation; march it directly.
    let riccati = |t: f64, v: &[C]| -> Vec<C> {
        let k = a_cheb[2].eval(t);
        vec![-(v[0] * v[0] * 2.0 + k * 0.5)]
    };
    let phi2 = rk4_at_times(&riccati, 0.0, &[init[2]], &grid.nodes, PHASE_STEP);
    let mut phi = NodeJet::zero(order, n);
    for (i, &t) in grid.nodes.iter().enumerate() {
        phi.c[0][i] = c(t);
        phi.c[2][i] = phi2[i][0];
    }
    let node_a = |i: usize| -> Vec<C> { a.c.iter().take(order + 1).map(|v| v[i]).collect() };
    let node_phi = |phi: &NodeJet, i: usize| -> Vec<C> {
        let mut ph: Vec<C> = phi.c.iter().map(|v| v[i]).collect();
        ph[0] = c(0.0);
        ph
    };
    // Higher orders: φ_m' + m M φ_m equals the rate computed with φ_m = 0.
    for m in 3..=order {
        let g: Vec<C> = (0..n).map(|i| eikonal_rates(&node_a(i), &node_phi(&phi, i))[m] * 2.0).collect();
        let kappa: Vec<C> = phi.c[2].iter().map(|v| v * (4 * m) as f64).collect();
        phi.c[m] = grid.solve_linear(&kappa, &g, init[m]);
    }
    let mut phi_t = NodeJet::zero(order, n);
    for i in 0..n {
        phi_t.c[0][i] = c(1.0);
        let rates = eikonal_rates(&node_a(i), &node_phi(&phi, i));
        for m in 2..=order {
            phi_t.c[m][i] = rates[m];
        }
    }
    let phi_tt = phi_t.dt(&grid);
    let cheb_phi: Vec<Cheb> = phi.c.iter().map(|v| grid.cheb(v)).collect();
    for (m, ch) in cheb_phi.iter().enumerate().skip(2) {
        let scale = ch.sup_norm().max(1.0);
        if ch.tail() > 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "phase coefficient φ_{m} under-resolved on [{lo}, {hi}] (tail {:.2e})",
                ch.tail()
            )));
        }
    }
    let cheb_phi_t = phi_t.c.iter().map(|v| grid.cheb(v)).collect();
    let cheb_phi_tt = phi_tt.c.iter().map(|v| grid.cheb(v)).collect();
    Ok(PhaseJet {
        frame: frame.clone(),
        order,
        m0,
        init,
        grid,
        phi,
        phi_t,
        phi_tt,
        j,
        a,
        fast_phi: cheb_phi.iter().map(PiecewiseCheb::from_cheb).collect(),
        cheb_phi,
        cheb_phi_t,
        cheb_phi_tt,
    })
}

fn horner(cs: &[C], y: f64) -> C {
    cs.iter().rev().fold(c(0.0), |acc, v| acc * y + v)
}

impl PhaseJet {
    /// Coefficient `φ_m(t)` at an arbitrary time.
    pub fn coeff(&self, m: usize, t: f64) -> C {
        self.cheb_phi[m].eval(t)
    }

    /// `M(t) = 2 φ_2(t)`.
    pub fn hessian_perp(&self, t: f64) -> C {
        self.coeff(2, t) * 2.0
    }

    /// `φ(t, y)` alone.
    pub fn value(&self, t: f64, y: f64) -> C {
        self.fast_phi.iter().rev().fold(c(0.0), |acc, ch| acc * y + ch.eval(t))
    }

    pub fn eval(&self, t: f64, y: f64) -> PhaseDerivs {
        let k = self.order;
        let f: Vec<C> = self.cheb_phi.iter().map(|ch| ch.eval(t)).collect();
        let ft: Vec<C> = self.cheb_phi_t.iter().map(|ch| ch.eval(t)).collect();
        let ftt: Vec<C> = self.cheb_phi_tt.iter().map(|ch| ch.eval(t)).collect();
        let fy: Vec<C> = (0..k).map(|m| f[m + 1] * (m + 1) as f64).collect();
        let fty: Vec<C> = (0..k).map(|m| ft[m + 1] * (m + 1) as f64).collect();
        let fyy: Vec<C> = (0..k.saturating_sub(1)).map(|m| f[m + 2] * ((m + 2) * (m + 1)) as f64).collect();
        PhaseDerivs {
            phi: horner(&f, y),
            phi_t: horner(&ft, y),
            phi_y: horner(&fy, y),
            phi_tt: horner(&ftt, y),
            phi_ty: horner(&fty, y),
            phi_yy: horner(&fyy, y),
        }
    }

    /// Largest `|A φ_t² + φ_y² − 1|` over `|y| ≤ rho` and the interior times,
    /// using the exact metric factor `A = 1/J²`.
    pub fn eikonal_residual(&self, rho: f64, ny: usize) -> f64 {
        let (t1, t2) = self.frame.path.interior_range();
        let ny = ny.max(2);
        let ys: Vec<f64> = (0..=ny).map(|k| -rho + 2.0 * rho * k as f64 / ny as f64).collect();
        let ts: Vec<f64> = self.grid.nodes.iter().copied().filter(|t| *t >= t1 && *t <= t2).collect();
        ts.par_iter()
            .map(|&t| {
                let col = self.frame.jacobi_column(t, &ys);
                ys.iter()
                    .zip(&col)
                    .map(|(&y, jp)| {
                        let d = self.eval(t, y);
                        let r = d.phi_t * d.phi_t / (jp.j * jp.j) + d.phi_y * d.phi_y - 1.0;
                        r.norm()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// `binom(1/2, k)`.
pub fn half_binomial(k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (0.5 - i as f64) / (i + 1) as f64)
}

/// The closed-form flat phase `φ = sqrt((t − ib)² + y²) + ib`, the distance
/// to a complex source point, whose transverse Hessian at `t = 0` is `i/b`.
#[derive(Clone, Copy, Debug)]
pub struct ExactFlatPhase {
    pub b: f64,
}

impl ExactFlatPhase {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return invalid(format!("complex source offset must be positive, got {b}"));
        }
        Ok(Self { b })
    }

    /// The complex distance `r` (branch continuous with `t − ib` at `y = 0`).
    pub fn r(&self, t: f64, y: f64) -> Result<C> {
        if y.abs() >= self.b {
            return Err(Error::Domain(format!(
                "|y| = {} reaches the branch point of the exact phase (b = {})",
                y.abs(),
                self.b
            )));
        }
        let z = C::new(t, -self.b);
        Ok(z * (c(1.0) + y * y / (z * z)).sqrt())
    }

    pub fn eval(&self, t: f64, y: f64) -> Result<PhaseDerivs> {
        let z = C::new(t, -self.b);
        let r = self.r(t, y)?;
        let rt = z / r;
        let ry = y / r;
        Ok(PhaseDerivs {
            phi: r + C::new(0.0, self.b),
            phi_t: rt,
            phi_y: ry,
            phi_tt: (c(1.0) - rt * rt) / r,
            phi_ty: -rt * ry / r,
            phi_yy: (c(1.0) - ry * ry) / r,
        })
    }

    /// Coefficients `φ_0..=φ_order` of the transverse expansion at `t`.
    pub fn jets(&self, t: f64, order: usize) -> Vec<C> {
        let z = C::new(t, -self.b);
        let mut out = vec![c(0.0); order + 1];
        out[0] = c(t);
        for k in 1..=order / 2 {
            out[2 * k] = z.powi(1 - 2 * k as i32) * half_binomial(k);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermi::build_frame;
    use crate::geodesic::{trace, TraceOptions, UnitCovector};
    use crate::manifold::{build_surface, SurfaceSpec};

    fn flat_frame(len: f64) -> FermiFrame {
        let chart = build_surface(SurfaceSpec::FlatCylinder { a: len }, 12, None).unwrap();
        let start = UnitCovector::normalized(&chart, [1.0, 0.5 * len], [0.0, 1.0]).unwrap();
        let path = trace(&chart, start, &TraceOptions::default()).unwrap();
        build_frame(&chart, &path, Some(0.5)).unwrap()
    }

    #[test]
    fn flat_riccati_and_hessian_flow_agree_with_closed_form() {
        let fr = flat_frame(2.0);
        let pj = phase_jet(&fr, 2, C::new(0.0, 1.0), &[]).unwrap();
        let ts = [-1.0, -0.3, 0.0, 0.7, 1.05];
        let hf = hessian_flow(&fr, C::new(0.0, 1.0), &ts).unwrap();
        for (k, &t) in ts.iter().enumerate() {
            let exact = C::new(t, 1.0) / (1.0 + t * t);
            assert!((pj.hessian_perp(t) - exact).norm() < 1e-10, "t={t}");
            assert!((hf.m_perp[k] - exact).norm() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn flat_jets_match_exact_phase() {
        let fr = flat_frame(2.0);
        let ex = ExactFlatPhase::new(1.0).unwrap();
        let psi = ex.jets(0.0, 8)[3..].to_vec();
        let pj = phase_jet(&fr, 8, C::new(0.0, 1.0), &psi).unwrap();
        for &t in &[-0.9, 0.0, 0.4, 1.0] {
            let jets = ex.jets(t, 8);
            for m in 2..=8 {
                assert!((pj.coeff(m, t) - jets[m]).norm() < 1e-9, "m={m} t={t} {} {}", pj.coeff(m, t), jets[m]);
            }
            for &y in &[-0.2, 0.1, 0.2] {
                let d = ex.eval(t, y).unwrap();
                let p = pj.eval(t, y);
                assert!((d.phi - p.phi).norm() < 1e-8);
                assert!(d.phi.im >= 0.2 * y * y);
                let e = d.phi_t * d.phi_t + d.phi_y * d.phi_y - 1.0;
                assert!(e.norm() < 1e-13);
            }
        }
        assert!(ex.eval(0.0, 1.0).is_err());
    }

    #[test]
    fn sphere_residual_order() {
        let chart = build_surface(SurfaceSpec::SpherePatch { cap: 0.3 }, 12, None).unwrap();
        let start = UnitCovector::from_velocity(&chart, [0.5, std::f64::consts::FRAC_PI_2], [0.1, 1.0]).unwrap();
        let path = trace(&chart, start, &TraceOptions::default()).unwrap();
        let fr = build_frame(&chart, &path, Some(0.3)).unwrap();
        let pj = phase_jet(&fr, 4, C::new(0.2, 1.0), &[C::new(0.3, 0.1), C::new(0.0, 0.2)]).unwrap();
        let r1 = pj.eikonal_residual(0.05, 8);
        let r2 = pj.eikonal_residual(0.1, 8);
        let slope = (r2 / r1).log2();
        assert!((slope - 5.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn rates_reduce_to_riccati() {
        let phi = [c(0.0), c(0.0), C::new(0.1, 0.4)];
        let a = [c(1.0), c(0.0), c(2.0)];
        let p = eikonal_rates(&a, &phi);
        let m = phi[2] * 2.0;
        assert!((p[2] * 2.0 - (-m * m - 2.0)).norm() < 1e-15);
    }
}

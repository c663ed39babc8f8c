//! Linearized Calderón experiment on `ℝ × M0`: products of two beam
//! families tested against `f̂(λ, ·)` and read as an FBI transform with the
//! combined phase `φ1 + φ2`.
//!
//! The harmonic remainders are not built. Only the beam products are
//! integrated; see [`ProductExperiment`].

use crate::admissibility::{cylinder_pair, reflected_pair, family, AdmissiblePair, PhaseGrid};
use crate::error::{invalid, Error, Result};
use crate::fbi::{self, decay_fit, Classification, Cutoff, DecayReport, FbiQuery, Field, PhasePoint, SampledField, Thresholds};
use crate::fermi::build_frame;
use crate::geodesic::{TraceOptions, UnitCovector};
use crate::manifold::{MetricChart, SurfaceSpec};
use crate::quad::composite;
use crate::quasimode::{build_beam, Beam, BeamParams};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// A function `f(x1, x′)` on the slab `[x1_lo, x1_hi] × M0`.
pub trait SlabField: Sync {
    fn value(&self, x1: f64, xp: &[f64; 2]) -> C;
}

impl<F: Fn(f64, &[f64; 2]) -> C + Sync> SlabField for F {
    fn value(&self, x1: f64, xp: &[f64; 2]) -> C {
        self(x1, xp)
    }
}

/// Built-in separable test fields `g(x1) w(x′)` with `g(x1) = e^{−(x1/σ1)²}`.
///
/// The periodic variants are meant for a chart whose first axis is an angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestField {
    Zero,
    /// `w = e^{−|x′−c|²/σ²}`.
    Bump { center: [f64; 2], sigma: f64, sigma1: f64 },
    /// `w = 1{n·(x′−c) > 0} e^{−|x′−c|²/σ²}`.
    Jump { center: [f64; 2], normal: [f64; 2], sigma: f64, sigma1: f64 },
    /// `w = e^{(cos(x′1−c1) − 1)/width²} e^{−(x′2−c2)²/σ²}`.
    PeriodicBump { center: [f64; 2], width: f64, sigma: f64, sigma1: f64 },
    /// The periodic bump times `1{sin(x′1−c1) > 0}`, which jumps across
    /// `x′1 = c1` and `x′1 = c1 + π`.
    PeriodicJump { center: [f64; 2], width: f64, sigma: f64, sigma1: f64 },
}

impl TestField {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Zero => true,
            Self::Bump { sigma, sigma1, .. } => *sigma > 0.0 && *sigma1 > 0.0,
            Self::Jump { sigma, sigma1, normal, .. } => *sigma > 0.0 && *sigma1 > 0.0 && normal[0].hypot(normal[1]) > 0.0,
            Self::PeriodicBump { width, sigma, sigma1, .. } | Self::PeriodicJump { width, sigma, sigma1, .. } => {
                *width > 0.0 && *sigma > 0.0 && *sigma1 > 0.0
            }
        };
        if !ok {
            return invalid("test field widths must be positive and a jump normal nonzero");
        }
        Ok(())
    }

    /// The transverse factor `w(x′)`.
    pub fn transverse(&self, xp: &[f64; 2]) -> f64 {
        let gauss = |c: &[f64; 2], s: f64| (-((xp[0] - c[0]).powi(2) + (xp[1] - c[1]).powi(2)) / (s * s)).exp();
        let periodic = |c: &[f64; 2], w: f64, s: f64| {
            (((xp[0] - c[0]).cos() - 1.0) / (w * w)).exp() * (-(xp[1] - c[1]).powi(2) / (s * s)).exp()
        };
        match self {
            Self::Zero => 0.0,
            Self::Bump { center, sigma, .. } => gauss(center, *sigma),
            Self::Jump { center, normal, sigma, .. } => {
                let side = normal[0] * (xp[0] - center[0]) + normal[1] * (xp[1] - center[1]);
                if side > 0.0 {
                    gauss(center, *sigma)
                } else {
                    0.0
                }
            }
            Self::PeriodicBump { center, width, sigma, .. } => periodic(center, *width, *sigma),
            Self::PeriodicJump { center, width, sigma, .. } => {
                if (xp[0] - center[0]).sin() > 0.0 {
                    periodic(center, *width, *sigma)
                } else {
                    0.0
                }
            }
        }
    }

    fn sigma1(&self) -> f64 {
        match self {
            Self::Zero => 1.0,
            Self::Bump { sigma1, .. }
            | Self::Jump { sigma1, .. }
            | Self::PeriodicBump { sigma1, .. }
            | Self::PeriodicJump { sigma1, .. } => *sigma1,
        }
    }

    /// `ĝ(λ) = σ1 √π e^{−λ²σ1²/4}`.
    pub fn g_hat(&self, lambda: f64) -> f64 {
        let s = self.sigma1();
        s * std::f64::consts::PI.sqrt() * (-lambda * lambda * s * s / 4.0).exp()
    }
}

impl SlabField for TestField {
    fn value(&self, x1: f64, xp: &[f64; 2]) -> C {
        let s = self.sigma1();
        C::new((-(x1 / s).powi(2)).exp() * self.transverse(xp), 0.0)
    }
}

/// `f̂(λ, x′) = ∫ e^{−iλx1} f(x1, x′) dx1`, evaluated on demand by
/// composite Gauss–Legendre quadrature in `x1`.
pub struct HatF<'a, F: SlabField> {
    pub f: &'a F,
    pub lambda: f64,
    nodes: Vec<(f64, C)>,
}

/// Relative size of `f` at the slab faces above which its support is
/// considered to reach them.
pub const SLAB_EDGE_TOL: f64 = 1e-12;

/// Builds `f̂(λ, ·)` after checking that `f` vanishes at both slab faces on
/// the probe points `probe`.
pub fn hat_f<'a, F: SlabField>(f: &'a F, lambda: f64, slab: (f64, f64), probe: &[[f64; 2]]) -> Result<HatF<'a, F>> {
    let (lo, hi) = slab;
    if !(hi > lo) || !lambda.is_finite() {
        return invalid(format!("slab must satisfy x1_lo < x1_hi and lambda must be finite, got {lo}..{hi}"));
    }
    let mut inner = 0.0f64;
    let mut edge = 0.0f64;
    for xp in probe {
        for k in 0..=16 {
            inner = inner.max(f.value(lo + (hi - lo) * k as f64 / 16.0, xp).norm());
        }
        edge = edge.max(f.value(lo, xp).norm()).max(f.value(hi, xp).norm());
    }
    if edge > SLAB_EDGE_TOL * inner.max(f64::MIN_POSITIVE) {
        return Err(Error::Domain(format!(
            "support of f reaches the slab faces x1 = {lo} or {hi} (relative size {:.3e})",
            edge / inner.max(f64::MIN_POSITIVE)
        )));
    }
    let width = (0.25f64).min(std::f64::consts::PI / (5.0 * lambda.abs().max(1e-300)));
    let nodes = composite(lo, hi, width, 16)
        .into_iter()
        .map(|(x, w)| (x, C::new(0.0, -lambda * x).exp() * w))
        .collect();
    Ok(HatF { f, lambda, nodes })
}

impl<F: SlabField> HatF<'_, F> {
    pub fn eval(&self, xp: &[f64; 2]) -> C {
        self.nodes.iter().map(|&(x1, w)| w * self.f.value(x1, xp)).sum()
    }

    /// Samples on a tensor grid, first index along the first axis.
    pub fn samples(&self, xs: &[f64], ys: &[f64]) -> Vec<C> {
        xs.par_iter().flat_map_iter(|&x| ys.iter().map(move |&y| self.eval(&[x, y]))).collect()
    }
}

/// `max |f̂(−λ) − conj f̂(λ)|` over the grid, zero for real `f`.
pub fn conjugate_symmetry_defect<F: SlabField>(f: &F, lambda: f64, slab: (f64, f64), xs: &[f64], ys: &[f64]) -> Result<f64> {
    let probe: Vec<[f64; 2]> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| [x, y])).collect();
    let p = hat_f(f, lambda, slab, &probe)?.samples(xs, ys);
    let m = hat_f(f, -lambda, slab, &probe)?.samples(xs, ys);
    Ok(p.iter().zip(&m).map(|(a, b)| (b - a.conj()).norm()).fold(0.0, f64::max))
}

/// `f(x1, x′)` sampled on a regular lattice, as read from a table with
/// columns `x1, x2, x3, value`. Here `x2, x3` are the chart coordinates of M0.
#[derive(Clone, Debug)]
pub struct SlabSamples {
    pub x1: Vec<f64>,
    pub lo: [f64; 2],
    pub step: [f64; 2],
    pub shape: [usize; 2],
    /// Indexed `[k][i][j]` over `x1`, first and second chart axes.
    pub values: Vec<f64>,
}

impl SlabSamples {
    pub fn from_rows(rows: &[[f64; 4]]) -> Result<Self> {
        let axis = |k: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
            v
        };
        let axes = [axis(0), axis(1), axis(2)];
        if axes.iter().any(|a| a.len() < 3) {
            return invalid("slab samples need at least 3 distinct values per axis");
        }
        if axes.iter().map(Vec::len).product::<usize>() != rows.len() {
            return invalid("slab samples do not form a complete regular grid");
        }
        if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
            return invalid("slab samples must be finite");
        }
        let steps: Vec<f64> = axes.iter().map(|a| (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64).collect();
        for (a, st) in axes.iter().zip(&steps) {
            if a.windows(2).any(|w| ((w[1] - w[0]) / st - 1.0).abs() > 1e-6) {
                return invalid("slab sample grid is not uniformly spaced");
            }
        }
        let (n1, n2) = (axes[1].len(), axes[2].len());
        let mut values = vec![0.0; rows.len()];
        for r in rows {
            let idx = |k: usize| ((r[k] - axes[k][0]) / steps[k]).round() as usize;
            values[(idx(0) * n1 + idx(1)) * n2 + idx(2)] = r[3];
        }
        Ok(Self { x1: axes[0].clone(), lo: [axes[1][0], axes[2][0]], step: [steps[1], steps[2]], shape: [n1, n2], values })
    }

    /// `f̂(λ, ·)` on the transverse lattice by the trapezoidal rule in `x1`,
    /// which is spectrally accurate once `f` vanishes smoothly at both faces.
    pub fn hat(&self, lambda: f64, degree: usize) -> Result<SampledField> {
        if !lambda.is_finite() {
            return invalid("lambda must be finite");
        }
        let plane = self.shape[0] * self.shape[1];
        let n = self.x1.len();
        let max = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let edge = self.values[..plane].iter().chain(&self.values[(n - 1) * plane..]).fold(0.0f64, |m, v| m.max(v.abs()));
        if edge > SLAB_EDGE_TOL * max.max(f64::MIN_POSITIVE) {
            return Err(Error::Domain(format!(
                "support of f reaches the slab faces x1 = {} or {}",
                self.x1[0],
                self.x1[n - 1]
            )));
        }
        let dx = (self.x1[n - 1] - self.x1[0]) / (n - 1) as f64;
        let mut out = vec![C::new(0.0, 0.0); plane];
        for (k, &x) in self.x1.iter().enumerate() {
            let w = if k == 0 || k == n - 1 { 0.5 * dx } else { dx };
            let e = C::new(0.0, -lambda * x).exp() * w;
            for (o, v) in out.iter_mut().zip(&self.values[k * plane..(k + 1) * plane]) {
                *o += e * *v;
            }
        }
        SampledField::new(self.lo, self.step, self.shape, out, degree)
    }
}

/// Tabulates `f̂(λ, ·)` on a lattice spanning `window` with spacing at most
/// `step`.
pub fn hat_grid<F: SlabField>(
    f: &F,
    lambda: f64,
    slab: (f64, f64),
    window: ([f64; 2], [f64; 2]),
    step: f64,
    degree: usize,
) -> Result<SampledField> {
    let (lo, hi) = window;
    if !(step > 0.0) || !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return invalid("sampling window must have positive extent and step");
    }
    let axis = |k: usize| {
        let n = ((hi[k] - lo[k]) / step).ceil() as usize + 1;
        let n = n.max(degree + 1);
        let st = (hi[k] - lo[k]) / (n - 1) as f64;
        ((0..n).map(|i| lo[k] + st * i as f64).collect::<Vec<_>>(), st)
    };
    let ((xs, sx), (ys, sy)) = (axis(0), axis(1));
    let probe: Vec<[f64; 2]> = (0..=12)
        .flat_map(|i| (0..=12).map(move |j| [lo[0] + (hi[0] - lo[0]) * i as f64 / 12.0, lo[1] + (hi[1] - lo[1]) * j as f64 / 12.0]))
        .collect();
    let hat = hat_f(f, lambda, slab, &probe)?;
    SampledField::new(lo, [sx, sy], [xs.len(), ys.len()], hat.samples(&xs, &ys), degree)
}

/// `conj f̂(λ, ·)`, the input whose FBI transform the product integral
/// reproduces.
struct Conj<'a, F: Field<2>>(&'a F);

impl<F: Field<2>> Field<2> for Conj<'_, F> {
    fn value(&self, x: &[f64; 2]) -> C {
        self.0.value(x).conj()
    }

    fn domain(&self) -> Option<([f64; 2], [f64; 2])> {
        self.0.domain()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductExperiment {
    pub chart: MetricChart,
    pub lambda: f64,
    pub alpha0: UnitCovector,
    /// First covector of the centre pair; the rotated cylinder pair when absent.
    pub zeta1: Option<[f64; 2]>,
    pub grid: PhaseGrid,
    /// Beam template; `lambda` is overridden per beam.
    pub beam: BeamParams,
    pub frame_radius: f64,
    pub hs: Vec<f64>,
    pub slab: (f64, f64),
    /// Chart box for the product integral and the `f̂` table. Defaults to
    /// the whole chart, one period centred on `α0` along a periodic axis.
    pub window: Option<([f64; 2], [f64; 2])>,
    /// Lattice spacing of the shared `f̂` table.
    pub sample_step: f64,
    /// Interpolation degree on that lattice.
    pub sample_degree: usize,
    pub trace: TraceOptions,
    pub tol: f64,
    pub thresholds: Thresholds,
    /// Cutoff used by the direct FBI cross-check.
    pub fbi_cutoff: Cutoff,
}

impl ProductExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.hs.windows(2).any(|w| w[1] >= w[0]) || self.hs.iter().any(|h| !(*h > 0.0)) {
            return invalid("h list must be positive and strictly decreasing");
        }
        let (lo, hi) = self.window();
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return invalid("integration window must have positive extent");
        }
        if !self.lambda.is_finite() {
            return invalid("lambda must be finite");
        }
        if !(self.sample_step > 0.0) || self.sample_degree < 1 {
            return invalid("sample_step must be positive and sample_degree at least 1");
        }
        if !(self.frame_radius > 0.0) {
            return invalid("frame_radius must be positive");
        }
        Ok(())
    }

    pub fn window(&self) -> ([f64; 2], [f64; 2]) {
        if let Some(w) = self.window {
            return w;
        }
        let mut lo = self.chart.lo;
        let mut hi = self.chart.hi;
        for k in 0..2 {
            if self.chart.periodic[k] {
                lo[k] = self.alpha0.x[k] - std::f64::consts::PI;
                hi[k] = self.alpha0.x[k] + std::f64::consts::PI;
            }
        }
        (lo, hi)
    }
}

/// The admissible pair generating `α0`.
pub fn center_pair(exp: &ProductExperiment) -> Result<AdmissiblePair> {
    let a = UnitCovector::normalized(&exp.chart, exp.alpha0.x, exp.alpha0.xi)?;
    let pair = match exp.zeta1 {
        None if matches!(exp.chart.spec, SurfaceSpec::FlatCylinder { .. }) => {
            cylinder_pair(&exp.chart, a.x, a.xi, &exp.trace, exp.tol)?
        }
        None => return invalid("zeta1 is required off the flat cylinder"),
        Some(z) => reflected_pair(&exp.chart, a.x, a.xi, z, &exp.trace, exp.tol)?,
    };
    if !pair.report.passed {
        return Err(Error::NotAdmissible(format!("centre pair at {:?} is not admissible", a)));
    }
    Ok(pair)
}

/// Beams along both geodesics of a pair: `v1` carries `s1 = 1/h + iλ`,
/// `v2` carries `s2 = 1/h`.
pub struct BeamPair {
    pub pair: AdmissiblePair,
    pub v1: Beam,
    pub v2: Beam,
}

pub fn beam_pair(exp: &ProductExperiment, pair: &AdmissiblePair) -> Result<BeamPair> {
    let f1 = build_frame(&exp.chart, &pair.gamma1, Some(exp.frame_radius))?;
    let f2 = build_frame(&exp.chart, &pair.gamma2, Some(exp.frame_radius))?;
    let p1 = BeamParams { lambda: exp.lambda, ..exp.beam.clone() };
    let p2 = BeamParams { lambda: 0.0, ..exp.beam.clone() };
    Ok(BeamPair { pair: pair.clone(), v1: build_beam(&f1, &p1)?, v2: build_beam(&f2, &p2)? })
}

/// Quadrature nodes over the window with one or more `f̂` tables
/// interpolated onto them; shared by all `α` at one `h`.
pub struct ProductGrid {
    pub h: f64,
    /// Node, quadrature weight times area density, and `f̂` per field.
    pub nodes: Vec<([f64; 2], f64, Vec<C>)>,
    pub n_fields: usize,
}

/// Node spacing at most `h/4` in both chart directions. Nodes where every
/// field vanishes are dropped.
pub fn product_grid<F: Field<2>>(chart: &MetricChart, hats: &[&F], window: ([f64; 2], [f64; 2]), h: f64) -> ProductGrid {
    let order = 8;
    let width = 0.25 * h * order as f64 * 2.0 / std::f64::consts::PI;
    let (lo, hi) = window;
    let xs = composite(lo[0], hi[0], width, order);
    let ys = composite(lo[1], hi[1], width, order);
    let zero = C::new(0.0, 0.0);
    let nodes = xs
        .par_iter()
        .flat_map_iter(|&(x, wx)| {
            ys.iter().filter_map(move |&(y, wy)| {
                let p = [x, y];
                let f: Vec<C> = hats.iter().map(|u| u.value(&p)).collect();
                f.iter().any(|v| *v != zero).then(|| (p, wx * wy * chart.area_density(&p), f))
            })
        })
        .collect();
    ProductGrid { h, nodes, n_fields: hats.len() }
}

/// `I(α, h) = ∫ f̂(λ, x′) v1 v2 dV_{g0}` for every field of the grid.
pub fn product_integral(grid: &ProductGrid, pair: &BeamPair) -> Result<Vec<C>> {
    let q1 = pair.v1.assemble(grid.h)?;
    let q2 = pair.v2.assemble(grid.h)?;
    let zero = C::new(0.0, 0.0);
    let parts: Vec<Result<Vec<C>>> = grid
        .nodes
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = vec![zero; grid.n_fields];
            for (p, w, f) in chunk {
                let a = q1.value(p)?;
                if a == zero {
                    continue;
                }
                let b = q2.value(p)?;
                if b == zero {
                    continue;
                }
                let ab = a * b * *w;
                for (s, v) in acc.iter_mut().zip(f) {
                    *s += v * ab;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![zero; grid.n_fields];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    Ok(total)
}

/// The combined phase `φ1 + φ2` at the common base point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhaseCheck {
    pub value: f64,
    pub gradient_err: f64,
    pub t0: f64,
    pub min_im_eigenvalue: f64,
}

pub const PHASE_VALUE_TOL: f64 = 1e-10;
pub const PHASE_GRADIENT_TOL: f64 = 1e-8;

fn lower(g: &nalgebra::Matrix2<f64>, v: &[f64; 2]) -> [f64; 2] {
    [g[(0, 0)] * v[0] + g[(0, 1)] * v[1], g[(1, 0)] * v[0] + g[(1, 1)] * v[1]]
}

fn dot(g: &nalgebra::Matrix2<f64>, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let la = lower(g, a);
    la[0] * b[0] + la[1] * b[1]
}

/// Checks value, gradient and positivity of `Im` Hessian of `φ1 + φ2` at
/// `α_x`. Fermi coordinates have vanishing Christoffel symbols on the
/// geodesic, so each Fermi Hessian is covariant there.
pub fn combined_phase_conditions(pair: &BeamPair) -> Result<PhaseCheck> {
    let chart = &pair.v1.frame.path.chart;
    let x0 = pair.pair.alpha.x;
    let g = chart.metric(&x0)?;
    let gi = chart.cometric(&x0)?;
    let d1 = pair.v1.phase_derivs(0.0, 0.0)?;
    let d2 = pair.v2.phase_derivs(0.0, 0.0)?;
    let (t1, n1) = pair.v1.frame_vectors(0.0);
    let (t2, n2) = pair.v2.frame_vectors(0.0);
    let value = (d1.phi + d2.phi).norm();
    let (l1, m1, l2, m2) = (lower(&g, &t1), lower(&g, &n1), lower(&g, &t2), lower(&g, &n2));
    let grad: Vec<C> = (0..2).map(|k| d1.phi_t * l1[k] + d1.phi_y * m1[k] + d2.phi_t * l2[k] + d2.phi_y * m2[k]).collect();
    let t0 = pair.pair.t0;
    let xi = pair.pair.alpha.xi;
    let e = [grad[0] - t0 * xi[0], grad[1] - t0 * xi[1]];
    let gradient_err = {
        let re = [e[0].re, e[1].re];
        let im = [e[0].im, e[1].im];
        (dot(&gi, &re, &re) + dot(&gi, &im, &im)).sqrt()
    };
    // Beam 2's frame expressed in beam 1's orthonormal frame.
    let p = [[dot(&g, &t1, &t2), dot(&g, &n1, &t2)], [dot(&g, &t1, &n2), dot(&g, &n1, &n2)]];
    let h2 = [[d2.phi_tt.im, d2.phi_ty.im], [d2.phi_ty.im, d2.phi_yy.im]];
    let mut h = [[d1.phi_tt.im, d1.phi_ty.im], [d1.phi_ty.im, d1.phi_yy.im]];
    for (a, row) in h.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    *v += p[i][a] * h2[i][j] * p[j][b];
                }
            }
        }
    }
    let tr = h[0][0] + h[1][1];
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let min_im_eigenvalue = 0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt();
    let check = PhaseCheck { value, gradient_err, t0, min_im_eigenvalue };
    if value > PHASE_VALUE_TOL {
        return Err(Error::Numerical(format!("combined phase does not vanish at alpha_x: {value:.3e}")));
    }
    if gradient_err > PHASE_GRADIENT_TOL {
        return Err(Error::Numerical(format!("combined phase gradient misses t0*alpha_xi by {gradient_err:.3e}")));
    }
    if !(min_im_eigenvalue > 0.0) {
        return Err(Error::Numerical(format!(
            "Im Hessian of the combined phase is not positive definite (min eigenvalue {min_im_eigenvalue:.3e})"
        )));
    }
    Ok(check)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalderonRow {
    pub alpha: UnitCovector,
    pub t0: f64,
    pub phase: PhaseCheck,
    pub product: DecayReport,
    pub direct: DecayReport,
    pub agree: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalderonReport {
    pub hs: Vec<f64>,
    pub rows: Vec<CalderonRow>,
    pub family_size: usize,
    pub verified_radius: f64,
    pub warnings: Vec<String>,
}

impl CalderonReport {
    pub fn agreement(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.rows.iter().filter(|r| r.agree).count() as f64 / self.rows.len() as f64
    }
}

/// Runs the product scan over the admissible family around `α0` and cross-checks it
/// against a direct FBI scan of `conj f̂(λ, ·)`.
pub fn microlocal_scan<F: SlabField>(exp: &ProductExperiment, f: &F) -> Result<CalderonReport> {
    exp.validate()?;
    let hat = hat_grid(f, exp.lambda, exp.slab, exp.window(), exp.sample_step, exp.sample_degree)?;
    scan_with_hat(exp, &hat)
}

/// As [`microlocal_scan`], starting from a tabulated `f̂(λ, ·)` shared by
/// both pipelines.
pub fn scan_with_hat(exp: &ProductExperiment, hat: &SampledField) -> Result<CalderonReport> {
    Ok(scan_with_hats(exp, &[hat])?.remove(0))
}

/// Scans several tabulated fields against one beam family, so the beams
/// and their node values are computed once.
pub fn scan_with_hats(exp: &ProductExperiment, hats: &[&SampledField]) -> Result<Vec<CalderonReport>> {
    exp.validate()?;
    if hats.is_empty() {
        return invalid("no fields to scan");
    }
    let window = exp.window();
    for hat in hats {
        let (dlo, dhi) = hat.domain().expect("sampled fields have a domain");
        let slack = 1e-9 * (1.0 + window.1[0].abs().max(window.1[1].abs()));
        if (0..2).any(|k| window.0[k] < dlo[k] - slack || window.1[k] > dhi[k] + slack) {
            return Err(Error::Domain(format!("tabulated f-hat covers {dlo:?}..{dhi:?}, short of the window {window:?}")));
        }
    }
    let pair0 = center_pair(exp)?;
    let fam = family(&exp.chart, &pair0, exp.grid, &exp.trace, exp.tol)?;
    let mut warnings = Vec::new();
    let failed = fam.members.iter().filter(|m| !m.passed).count();
    if failed > 0 {
        warnings.push(format!("{failed} family members failed admissibility and were skipped"));
    }
    if fam.passing.is_empty() {
        return Err(Error::NotAdmissible("no family member passed admissibility".into()));
    }
    let pairs: Vec<BeamPair> = fam.passing.iter().map(|p| beam_pair(exp, p)).collect::<Result<_>>()?;
    let checks: Vec<PhaseCheck> = pairs.iter().map(combined_phase_conditions).collect::<Result<_>>()?;
    // values[field][pair][h]
    let mut values = vec![vec![vec![0.0; exp.hs.len()]; pairs.len()]; hats.len()];
    for (k, &h) in exp.hs.iter().enumerate() {
        let grid = product_grid(&exp.chart, hats, window, h);
        for (i, p) in pairs.iter().enumerate() {
            for (m, v) in product_integral(&grid, p)?.into_iter().enumerate() {
                values[m][i][k] = v.norm();
            }
        }
    }
    let alphas: Vec<PhasePoint<2>> = pairs
        .iter()
        .map(|p| {
            let a = p.pair.alpha;
            let n = a.xi[0].hypot(a.xi[1]);
            PhasePoint::new(a.x, [a.xi[0] / n, a.xi[1] / n])
        })
        .collect::<Result<_>>()?;
    let template = FbiQuery::standard(alphas[0], exp.fbi_cutoff);
    let mut reports = Vec::with_capacity(hats.len());
    for (hat, field_values) in hats.iter().zip(values) {
        let mut warnings = warnings.clone();
        let direct = fbi::scan(&Conj(*hat), &alphas, &exp.hs, &template, &exp.thresholds)?;
        warnings.extend(direct.warnings.iter().cloned());
        let mut rows = Vec::with_capacity(pairs.len());
        for ((p, check), (vals, d)) in pairs.iter().zip(&checks).zip(field_values.into_iter().zip(direct.rows)) {
            let product = decay_fit(&exp.hs, &vals, &exp.thresholds)?;
            let agree = product.class == d.report.class;
            rows.push(CalderonRow { alpha: p.pair.alpha, t0: p.pair.t0, phase: *check, product, direct: d.report, agree });
        }
        let n_disagree = rows.iter().filter(|r| !r.agree).count();
        if n_disagree > 0 {
            warnings.push(format!("product and direct FBI verdicts disagree at {n_disagree} points"));
        }
        let undecided = rows.iter().filter(|r| r.product.class == Classification::Inconclusive).count();
        if undecided > 0 {
            warnings.push(format!("{undecided} points have statistically indistinguishable decay fits"));
        }
        reports.push(CalderonReport {
            hs: exp.hs.clone(),
            rows,
            family_size: fam.members.len(),
            verified_radius: fam.verified_radius,
            warnings,
        });
    }
    Ok(reports)
}

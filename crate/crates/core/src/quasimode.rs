//! Global quasimodes `v = h^{−1/4} e^{isφ} (Σ_k h^k a_k) χ(y/δ')` glued by a
//! partition of unity along the geodesic, and their residuals under
//! `P = −h²Δ − (hs)²` with `s = 1/h + iλ`.
//!
//! The operator is applied analytically through the chain rule on the jet
//! (or closed-form) representation, never by grid differentiation.

use crate::beam_amplitude::{symbol_constant, transport, truncation, AmplitudeJet, ExactFlatAmplitude};
use crate::beam_phase::{phase_jet, ExactFlatPhase, PhaseDerivs, PhaseJet};
use crate::cheb::Cheb;
use crate::error::{invalid, Error, Result};
use crate::fermi::FermiFrame;
use crate::fit::{fit_decay, DecayFit};
use crate::manifold::SurfaceSpec;
use crate::quad::composite;
use crate::taylor::{Scalar, Taylor};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C = Complex64;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// Smooth step from 0 at `x ≤ 0` to 1 at `x ≥ 1`, with its first two derivatives.
pub fn smoothstep(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let v = Taylor::variable(x, 0, 1, 2);
    let f = v.recip().scale(-1.0).exp();
    let g = (v.scale(-1.0).add_f64(1.0)).recip().scale(-1.0).exp();
    let s = f.clone() / (f + g);
    [s.partial(0, 0), s.partial(1, 0), s.partial(2, 0)]
}

/// Transverse cutoff `χ(y/δ')` with `χ = 1` on `|y| ≤ δ'/4` and `χ = 0` on
/// `|y| ≥ δ'/2`, returned with `∂_y` and `∂_y²`.
pub fn cutoff(y: f64, delta_prime: f64) -> [f64; 3] {
    let w = 4.0 * y.abs() / delta_prime - 1.0;
    let [s, s1, s2] = smoothstep(w);
    let dw = 4.0 * y.signum() / delta_prime;
    [1.0 - s, -s1 * dw, -s2 * dw * dw]
}

/// Partition of unity `χ_j(t)` subordinate to the cover intervals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Partition {
    /// Transition windows between consecutive intervals.
    pub windows: Vec<(f64, f64)>,
}

impl Partition {
    /// Uses the central fraction `shrink ∈ (0, 1]` of each overlap as the
    /// transition window.
    pub fn new(cover: &[(f64, f64)], shrink: f64) -> Self {
        let windows = cover
            .windows(2)
            .map(|w| {
                let (lo, hi) = (w[1].0, w[0].1);
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo) * shrink;
                (mid - half, mid + half)
            })
            .collect();
        Self { windows }
    }

    fn up(&self, j: usize, t: f64) -> f64 {
        if j == 0 {
            return 1.0;
        }
        match self.windows.get(j - 1) {
            Some(&(a, b)) => smoothstep((t - a) / (b - a))[0],
            None => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self, j: usize, t: f64) -> f64 {
        self.up(j, t) - self.up(j + 1, t)
    }
}

/// Number of amplitude terms used at a given `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NPolicy {
    Fixed(usize),
    /// `N(h) = ⌊1/(heC)⌋` with the fitted symbol constant, capped at `n_max`.
    Scaled { n_max: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BeamKind {
    /// Phase and amplitude as transverse jets of orders `phase_order` and `amp_order`.
    Jets { m0: C, psi: Vec<C>, phase_order: usize, amp_order: usize, n: NPolicy },
    /// Closed-form complex-source beam on a flat chart.
    ExactFlat { b: f64, n: NPolicy },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub delta_prime: f64,
    pub lambda: f64,
    pub kind: BeamKind,
}

#[derive(Clone, Debug)]
enum Profile {
    Jets { phase: Box<PhaseJet>, amp: Box<AmplitudeJet>, j: Vec<[Cheb; 2]> },
    ExactFlat { phase: ExactFlatPhase, amp: ExactFlatAmplitude },
}

/// A beam along one geodesic, ready to be evaluated at any `h`.
#[derive(Clone, Debug)]
pub struct Beam {
    pub frame: FermiFrame,
    pub params: BeamParams,
    pub symbol_constant: Option<f64>,
    pub sup_norms: Vec<f64>,
    profile: Profile,
}

/// Terms kept in the exact flat hierarchy when fitting its symbol constant.
const EXACT_FIT_TERMS: usize = 10;

fn jet_sup_norms(amp: &AmplitudeJet, frame: &FermiFrame, delta_prime: f64) -> Vec<f64> {
    let (t1, t2) = frame.path.interior_range();
    amp.sup_norms(t1, t2, 0.5 * delta_prime)
}

pub fn build_beam(frame: &FermiFrame, params: &BeamParams) -> Result<Beam> {
    let dp = params.delta_prime;
    if !(dp > 0.0 && dp.is_finite()) {
        return invalid(format!("delta_prime must be positive, got {dp}"));
    }
    if dp > frame.radius + 1e-12 {
        return invalid(format!("delta_prime = {dp} exceeds the Fermi radius {}", frame.radius));
    }
    if !params.lambda.is_finite() {
        return invalid("lambda must be finite");
    }
    let mut out = match &params.kind {
        BeamKind::Jets { m0, psi, phase_order, amp_order, n } => {
            let n_terms = match n {
                NPolicy::Fixed(n) => *n,
                NPolicy::Scaled { n_max } => (*n_max).max(3),
            };
            let phase = phase_jet(frame, *phase_order, *m0, psi)?;
            let amp = transport(&phase, *amp_order, n_terms, params.lambda)?;
            let sups = jet_sup_norms(&amp, frame, dp);
            let j = phase
                .j
                .c
                .iter()
                .map(|v| {
                    let f = phase.grid.cheb(v);
                    let d = phase.grid.chopped(v).deriv();
                    [f, d]
                })
                .collect();
            Beam {
                frame: frame.clone(),
                params: params.clone(),
                symbol_constant: None,
                sup_norms: sups,
                profile: Profile::Jets { phase: Box::new(phase), amp: Box::new(amp), j },
            }
        }
        BeamKind::ExactFlat { b, n } => {
            if !matches!(frame.chart().spec, SurfaceSpec::FlatCylinder { .. }) {
                return invalid("exact_flat beams need a flat cylinder chart");
            }
            let phase = ExactFlatPhase::new(*b)?;
            if 0.5 * dp >= *b {
                return Err(Error::Domain(format!(
                    "tube half-width δ'/2 = {} reaches the branch point |y| = b = {b}",
                    0.5 * dp
                )));
            }
            let n_terms = match n {
                NPolicy::Fixed(n) => *n,
                NPolicy::Scaled { n_max } => (*n_max).max(EXACT_FIT_TERMS),
            };
            let amp = ExactFlatAmplitude::new(*b, params.lambda, n_terms);
            let (t1, t2) = frame.path.interior_range();
            let ts: Vec<f64> = (0..=40).map(|i| t1 + (t2 - t1) * i as f64 / 40.0).collect();
            let ys: Vec<f64> = (0..=20).map(|i| -0.5 * dp + dp * i as f64 / 20.0).collect();
            let mut sups = vec![0.0f64; n_terms + 1];
            for &t in &ts {
                for &y in &ys {
                    let r = phase.r(t, y)?;
                    for (k, s) in sups.iter_mut().enumerate() {
                        *s = s.max(amp.term(k, r).norm());
                    }
                }
            }
            Beam {
                frame: frame.clone(),
                params: params.clone(),
                symbol_constant: None,
                sup_norms: sups,
                profile: Profile::ExactFlat { phase, amp },
            }
        }
    };
    out.symbol_constant = Some(symbol_constant(&out.sup_norms));
    Ok(out)
}

/// Integration accuracy settings. Panel widths default to the coarsest
/// values meeting the resolution rule.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Node spacing along the geodesic; at most `h/4`.
    pub dt: Option<f64>,
    /// Node spacing across the geodesic; at most `√h/4`.
    pub dy: Option<f64>,
    /// Refinement factor dividing both spacings.
    pub refine: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { order: 8, dt: None, dy: None, refine: 1.0 }
    }
}

impl QuadSpec {
    fn spacings(&self, h: f64) -> Result<(f64, f64)> {
        let (need_t, need_y) = (h / 4.0, h.sqrt() / 4.0);
        let dt = self.dt.unwrap_or(need_t);
        let dy = self.dy.unwrap_or(need_y);
        if dt > need_t * (1.0 + 1e-12) || dy > need_y * (1.0 + 1e-12) {
            return invalid(format!(
                "quadrature under-resolved at h = {h}: need dt ≤ {need_t:.3e} and dy ≤ {need_y:.3e}, got {dt:.3e} and {dy:.3e}"
            ));
        }
        if self.order < 2 || !(self.refine >= 1.0) {
            return invalid("quadrature order must be ≥ 2 and refine ≥ 1");
        }
        Ok((dt / self.refine, dy / self.refine))
    }

    fn halved(&self) -> Self {
        Self { refine: self.refine * 2.0, ..*self }
    }
}

/// Value with a step-halving error estimate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// A beam evaluated at fixed `h`.
#[derive(Clone, Debug)]
pub struct Quasimode<'a> {
    pub beam: &'a Beam,
    pub h: f64,
    pub s: C,
    pub n_terms: usize,
    pub partition: Partition,
}

/// Pointwise data for the metric factor `J` in Fermi coordinates.
#[derive(Clone, Copy, Debug)]
struct Metric {
    j: f64,
    j_t: f64,
    j_y: f64,
}

impl Beam {
    pub fn delta_prime(&self) -> f64 {
        self.params.delta_prime
    }

    /// Phase and its first two derivatives in Fermi coordinates.
    pub fn phase_derivs(&self, t: f64, y: f64) -> Result<PhaseDerivs> {
        match &self.profile {
            Profile::Jets { phase, .. } => Ok(phase.eval(t, y)),
            Profile::ExactFlat { phase, .. } => phase.eval(t, y),
        }
    }

    /// Unit tangent and unit normal vectors of the frame at time `t`.
    pub fn frame_vectors(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let s = self.frame.path.state_at(t);
        (self.frame.path.velocity(&s), self.frame.normal_at(&s))
    }

    pub fn max_terms(&self) -> usize {
        match &self.profile {
            Profile::Jets { amp, .. } => amp.n_terms,
            Profile::ExactFlat { amp, .. } => amp.n_terms(),
        }
    }

    /// Amplitude terms used at `h` under the configured policy.
    pub fn n_terms(&self, h: f64) -> usize {
        let policy = match &self.params.kind {
            BeamKind::Jets { n, .. } | BeamKind::ExactFlat { n, .. } => *n,
        };
        match policy {
            NPolicy::Fixed(n) => n,
            NPolicy::Scaled { n_max } => {
                truncation(h, self.symbol_constant.unwrap_or(1.0), n_max.min(self.max_terms()))
            }
        }
    }

    pub fn assemble(&self, h: f64) -> Result<Quasimode<'_>> {
        self.assemble_with(h, 1.0)
    }

    /// Assembly with a partition whose transition windows use the central
    /// fraction `shrink` of each overlap.
    pub fn assemble_with(&self, h: f64, shrink: f64) -> Result<Quasimode<'_>> {
        if !(h > 0.0 && h.is_finite()) {
            return invalid(format!("h must be positive, got {h}"));
        }
        if !(shrink > 0.0 && shrink <= 1.0) {
            return invalid("partition shrink factor must lie in (0, 1]");
        }
        Ok(Quasimode {
            beam: self,
            h,
            s: C::new(1.0 / h, self.params.lambda),
            n_terms: self.n_terms(h),
            partition: Partition::new(&self.frame.cover, shrink),
        })
    }

    fn metric(&self, t: f64, y: f64) -> Metric {
        match &self.profile {
            Profile::ExactFlat { .. } => Metric { j: 1.0, j_t: 0.0, j_y: 0.0 },
            Profile::Jets { j, .. } => {
                let mut m = Metric { j: 0.0, j_t: 0.0, j_y: 0.0 };
                let mut yk = 1.0;
                for (k, [f, d]) in j.iter().enumerate() {
                    m.j += f.eval(t).re * yk;
                    m.j_t += d.eval(t).re * yk;
                    if k + 1 < j.len() {
                        m.j_y += j[k + 1][0].eval(t).re * (k + 1) as f64 * yk;
                    }
                    yk *= y;
                }
                m
            }
        }
    }

    /// Time limits of the tube slice at offset `y` inside the domain.
    pub fn tube_limits(&self, y: f64) -> Result<(f64, f64)> {
        let path = &self.frame.path;
        let (Some(entry), Some(exit)) = (path.entry, path.exit) else {
            return Err(Error::Domain("the geodesic does not cross the boundary".into()));
        };
        let chart = self.frame.chart();
        let solve = |t0: f64, axis: usize, upper: bool| -> Result<f64> {
            let face = if upper { chart.hi[axis] } else { chart.lo[axis] };
            let g = |t: f64| self.frame.from_fermi(t, y)[axis] - face;
            if y == 0.0 {
                return Ok(t0);
            }
            let g0 = g(t0);
            let step = 0.05 + 2.0 * y.abs();
            let (mut a, mut b) = (t0 - step, t0 + step);
            let (mut ga, mut gb) = (g(a), g(b));
            let mut tries = 0;
            while ga * gb > 0.0 {
                tries += 1;
                if tries > 20 {
                    return Err(Error::Numerical(format!(
                        "tube slice y = {y} does not meet the boundary face near t = {t0} (g = {g0})"
                    )));
                }
                a -= step;
                b += step;
                ga = g(a);
                gb = g(b);
            }
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm == 0.0 || b - a < 1e-14 {
                    return Ok(m);
                }
                if (gm > 0.0) == (ga > 0.0) {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            Ok(0.5 * (a + b))
        };
        let lo = solve(entry.t, entry.axis, entry.upper)?;
        let hi = solve(exit.t, exit.axis, exit.upper)?;
        Ok((lo, hi))
    }
}

impl<'a> Quasimode<'a> {
    fn prefactor(&self) -> f64 {
        self.h.powf(-0.25)
    }

    fn exp_phase(&self, phi: C) -> C {
        (C::new(0.0, 1.0) * self.s * phi).exp()
    }

    /// Single-beam value at Fermi point `(t, y)` (partition weights sum to one).
    pub fn value_fermi(&self, t: f64, y: f64) -> Result<C> {
        let dp = self.beam.delta_prime();
        let chi = cutoff(y, dp)[0];
        if chi == 0.0 {
            return Ok(c(0.0));
        }
        let (phi, a) = match &self.beam.profile {
            Profile::Jets { phase, amp, .. } => (phase.value(t, y), amp.value(t, y, self.h, self.n_terms)),
            Profile::ExactFlat { phase, amp } => {
                let r = phase.r(t, y)?;
                (r + C::new(0.0, phase.b), amp.radial(r, self.h, self.n_terms)[0])
            }
        };
        Ok(self.exp_phase(phi) * a * (chi * self.prefactor()))
    }

    /// Value at a chart point: the finite sum over Fermi preimages weighted
    /// by the partition.
    pub fn value(&self, x: &[f64; 2]) -> Result<C> {
        let mut acc = c(0.0);
        for (j, t, y) in self.beam.frame.to_fermi_all(x)? {
            let w = self.partition.weight(j, t);
            if w != 0.0 {
                acc += self.value_fermi(t, y)? * w;
            }
        }
        Ok(acc)
    }

    /// `(−h²Δ − (hs)²) v` at a Fermi point.
    pub fn apply_p_fermi(&self, t: f64, y: f64) -> Result<C> {
        let dp = self.beam.delta_prime();
        let [chi, chi_y, chi_yy] = cutoff(y, dp);
        if chi == 0.0 && chi_y == 0.0 && chi_yy == 0.0 {
            return Ok(c(0.0));
        }
        let s = self.s;
        let is = C::new(0.0, 1.0) * s;
        let (phi, bracket) = match &self.beam.profile {
            Profile::ExactFlat { phase, amp } => {
                let r = phase.r(t, y)?;
                let ry = y / r;
                let n = self.n_terms;
                let [a, ar, _] = amp.radial(r, self.h, n);
                let core = amp.defect(r, n) * (chi * self.h.powi(n as i32));
                let edge = ar * ry * (2.0 * chi_y) + a * chi_yy + is * ry * a * (2.0 * chi_y);
                (r + C::new(0.0, phase.b), core + edge)
            }
            Profile::Jets { phase, amp, .. } => {
                let d: PhaseDerivs = phase.eval(t, y);
                let ad = amp.column(t, self.h, self.n_terms).at(y);
                let m = self.beam.metric(t, y);
                let inv2 = 1.0 / (m.j * m.j);
                let drift = m.j_t / (m.j * m.j * m.j);
                let jy = m.j_y / m.j;
                let b = ad.v * chi;
                let b_t = ad.t * chi;
                let b_tt = ad.tt * chi;
                let b_y = ad.y * chi + ad.v * chi_y;
                let b_yy = ad.yy * chi + ad.y * (2.0 * chi_y) + ad.v * chi_yy;
                let lap_b = b_tt * inv2 - b_t * drift + b_yy + b_y * jy;
                let lap_phi = d.phi_tt * inv2 - d.phi_t * drift + d.phi_yy + d.phi_y * jy;
                let grad = d.phi_t * b_t * inv2 + d.phi_y * b_y;
                let eik = d.phi_t * d.phi_t * inv2 + d.phi_y * d.phi_y - 1.0;
                (d.phi, lap_b + is * (grad * 2.0 + lap_phi * b) - s * s * eik * b)
            }
        };
        Ok(-self.exp_phase(phi) * bracket * (self.h * self.h * self.prefactor()))
    }

    fn integrate(&self, q: &QuadSpec, f: impl Fn(f64, f64) -> Result<f64> + Sync) -> Result<f64> {
        let (dt, dy) = q.spacings(self.h)?;
        let half = 0.5 * self.beam.delta_prime();
        let cover = &self.beam.frame.cover;
        let (c_lo, c_hi) = (cover[0].0, cover[cover.len() - 1].1);
        for y in [-half, half] {
            let (lo, hi) = self.beam.tube_limits(y)?;
            if lo < c_lo - 1e-9 || hi > c_hi + 1e-9 {
                return Err(Error::Domain(format!(
                    "tube slice y = {y} spans t in [{lo:.4}, {hi:.4}], beyond the Fermi cover [{c_lo:.4}, {c_hi:.4}]; enlarge the chart margin or shrink delta_prime"
                )));
            }
        }
        let ynodes = composite(-half, half, dy * q.order as f64, q.order);
        let rows: Vec<Result<f64>> = ynodes
            .par_iter()
            .map(|&(y, wy)| {
                let (lo, hi) = self.beam.tube_limits(y)?;
                let mut acc = 0.0;
                for (t, wt) in composite(lo, hi, dt * q.order as f64, q.order) {
                    let jac = self.beam.metric(t, y).j;
                    acc += wt * jac * f(t, y)?;
                }
                Ok(acc * wy)
            })
            .collect();
        let mut total = 0.0;
        for r in rows {
            total += r?;
        }
        if !total.is_finite() {
            return Err(Error::Numerical(format!("non-finite integral at h = {}", self.h)));
        }
        Ok(total)
    }

    fn norm_with(&self, q: &QuadSpec, f: impl Fn(f64, f64) -> Result<C> + Sync + Copy) -> Result<Estimate> {
        let coarse = self.integrate(q, |t, y| Ok(f(t, y)?.norm_sqr()))?.sqrt();
        let fine = self.integrate(&q.halved(), |t, y| Ok(f(t, y)?.norm_sqr()))?.sqrt();
        Ok(Estimate { value: fine, error: (fine - coarse).abs() })
    }

    /// `‖v‖_{L²(X)}` over the part of the tube inside the domain.
    pub fn l2_norm(&self, q: &QuadSpec) -> Result<Estimate> {
        self.norm_with(q, |t, y| self.value_fermi(t, y))
    }

    /// `‖(−h²Δ − (hs)²) v‖_{L²(X)}`.
    pub fn residual(&self, q: &QuadSpec) -> Result<Estimate> {
        self.norm_with(q, |t, y| self.apply_p_fermi(t, y))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualRow {
    pub h: f64,
    pub n_terms: usize,
    pub residual: f64,
    pub residual_err: f64,
    pub v_norm: f64,
    pub v_norm_err: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    pub exponential: Option<DecayFit>,
    pub power: Option<DecayFit>,
    pub symbol_constant: Option<f64>,
}

/// Residual and norm over a descending `h` grid, with both decay fits.
pub fn residual_sweep(beam: &Beam, hs: &[f64], q: &QuadSpec) -> Result<ResidualReport> {
    if hs.is_empty() {
        return invalid("empty h grid");
    }
    if hs.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("h grid must be strictly decreasing");
    }
    let rows: Vec<Result<ResidualRow>> = hs
        .par_iter()
        .map(|&h| {
            let v = beam.assemble(h)?;
            let r = v.residual(q)?;
            let n = v.l2_norm(q)?;
            Ok(ResidualRow {
                h,
                n_terms: v.n_terms,
                residual: r.value,
                residual_err: r.error,
                v_norm: n.value,
                v_norm_err: n.error,
            })
        })
        .collect();
    let rows: Vec<ResidualRow> = rows.into_iter().collect::<Result<_>>()?;
    let (exponential, power) = match fit_decay(
        &rows.iter().map(|r| r.h).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.residual).collect::<Vec<_>>(),
    ) {
        Some((e, p)) => (Some(e), Some(p)),
        None => (None, None),
    };
    Ok(ResidualReport { rows, exponential, power, symbol_constant: beam.symbol_constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermi::build_frame;
    use crate::geodesic::{trace, TraceOptions, UnitCovector};
    use crate::manifold::build_surface;

    fn flat_frame(radius: f64) -> FermiFrame {
        let chart = build_surface(SurfaceSpec::FlatCylinder { a: 1.0 }, 12, None).unwrap();
        let start = UnitCovector::normalized(&chart, [0.0, 0.5], [0.0, 1.0]).unwrap();
        let path = trace(&chart, start, &TraceOptions::default()).unwrap();
        build_frame(&chart, &path, Some(radius)).unwrap()
    }

    #[test]
    fn cutoff_and_partition_shapes() {
        assert_eq!(cutoff(0.2, 1.0)[0], 1.0);
        assert_eq!(cutoff(-0.5, 1.0)[0], 0.0);
        let [v, d, _] = cutoff(0.375, 1.0);
        assert!((v - 0.5).abs() < 1e-12 && d < 0.0);
        let p = Partition::new(&[(-2.0, 0.5), (0.0, 3.0), (2.0, 5.0)], 1.0);
        for k in 0..=70 {
            let t = -2.0 + 0.1 * k as f64;
            let s: f64 = (0..3).map(|j| p.weight(j, t)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(p.weight(0, 0.6), 0.0);
        assert_eq!(p.weight(1, -0.1), 0.0);
    }

    #[test]
    fn exact_flat_matches_jets_on_axis_region() {
        let fr = flat_frame(2.0);
        let exact = build_beam(
            &fr,
            &BeamParams { delta_prime: 1.0, lambda: 0.0, kind: BeamKind::ExactFlat { b: 1.0, n: NPolicy::Fixed(0) } },
        )
        .unwrap();
        let ph = ExactFlatPhase::new(1.0).unwrap();
        let jets = build_beam(
            &fr,
            &BeamParams {
                delta_prime: 1.0,
                lambda: 0.0,
                kind: BeamKind::Jets {
                    m0: C::new(0.0, 1.0),
                    psi: ph.jets(0.0, 6)[3..].to_vec(),
                    phase_order: 6,
                    amp_order: 4,
                    n: NPolicy::Fixed(0),
                },
            },
        )
        .unwrap();
        let h = 0.05;
        let ve = exact.assemble(h).unwrap();
        let vj = jets.assemble(h).unwrap();
        for &t in &[-0.4, 0.0, 0.3] {
            let a = ve.value_fermi(t, 0.0).unwrap();
            let b = vj.value_fermi(t, 0.0).unwrap();
            assert!((a - b).norm() < 1e-10 * a.norm(), "t={t}");
            let on_axis = C::new(0.0, t / h).exp() * C::new(1.0, t).sqrt().inv() * h.powf(-0.25);
            assert!((a - on_axis).norm() < 1e-12 * a.norm());
        }
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let fr = flat_frame(2.0);
        let beam = build_beam(
            &fr,
            &BeamParams {
                delta_prime: 1.0,
                lambda: 0.4,
                kind: BeamKind::Jets {
                    m0: C::new(0.3, 1.0),
                    psi: vec![C::new(0.2, 0.1)],
                    phase_order: 3,
                    amp_order: 2,
                    n: NPolicy::Fixed(2),
                },
            },
        )
        .unwrap();
        let h = 0.1;
        let v = beam.assemble(h).unwrap();
        let d = 1e-3;
        let f = |t: f64, y: f64| v.value_fermi(t, y).unwrap();
        let d2 = |g: &dyn Fn(f64) -> C, x: f64| {
            (-g(x + 2.0 * d) + g(x + d) * 16.0 - g(x) * 30.0 + g(x - d) * 16.0 - g(x - 2.0 * d)) / (12.0 * d * d)
        };
        for &(t, y) in &[(0.1, 0.05), (-0.2, 0.3), (0.25, -0.2)] {
            let lap = d2(&|tt| f(tt, y), t) + d2(&|yy| f(t, yy), y);
            let fd = -(lap * (h * h)) - v.s * v.s * f(t, y) * (h * h);
            let an = v.apply_p_fermi(t, y).unwrap();
            assert!((fd - an).norm() <= 1e-4 * an.norm().max(1e-3 * f(t, y).norm()), "({t},{y}): {fd} vs {an}");
        }
    }

    #[test]
    fn norm_is_order_one_and_converged() {
        let fr = flat_frame(4.0);
        let beam = build_beam(
            &fr,
            &BeamParams { delta_prime: 4.0, lambda: 0.0, kind: BeamKind::ExactFlat { b: 3.0, n: NPolicy::Fixed(2) } },
        )
        .unwrap();
        let v = beam.assemble(1.0 / 16.0).unwrap();
        let n = v.l2_norm(&QuadSpec::default()).unwrap();
        assert!(n.value > 1.0 / 3.0 && n.value < 3.0);
        assert!(n.error < 1e-4 * n.value, "{n:?}");
        // Laplace-method prediction ‖v‖² ≈ ∫ sqrt(π (t² + b²)/b) |a0|² dt.
        let pred: f64 = crate::quad::integrate(-0.5, 0.5, 20, |t| {
            (std::f64::consts::PI * (t * t + 9.0) / 3.0).sqrt() / (1.0 + t * t / 9.0).sqrt()
        });
        assert!((n.value * n.value / pred - 1.0).abs() < 0.02 + 0.1 / 16.0);
        let bad = QuadSpec { dt: Some(1.0), ..QuadSpec::default() };
        assert!(v.l2_norm(&bad).unwrap_err().is_validation());
    }
}

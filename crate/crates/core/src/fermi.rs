//! Fermi coordinates `(t, y) ↦ exp_{γ(t)}(y e(t))` along a geodesic.
//!
//! On a surface the metric in these coordinates is `J(t,y)² dt² + dy²`,
//! where `J` is the Jacobi field with `J(t,0) = 1`, `J_y(t,0) = 0` and
//! `J_yy = −K J`. Transverse jets of `J` come from a power series of the
//! normal geodesic; pointwise values come from integrating the Jacobi
//! equation along it.

use crate::error::{invalid, Error, Result};
use crate::geodesic::{hamilton_rhs, GeodesicPath, Sample, FINE_STEP};
use crate::manifold::{MetricChart, SurfaceSpec};
use crate::ode::{rk4_at_times, rk4_to};
use crate::taylor::{Scalar, Taylor};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FermiFrame {
    pub path: GeodesicPath,
    pub radius: f64,
    /// Overlapping time intervals; each self-intersection time lies in exactly one.
    pub cover: Vec<(f64, f64)>,
    /// Sample times of the path.
    pub times: Vec<f64>,
    /// Unit normal vector `e(t)` at each sample.
    pub normals: Vec<[f64; 2]>,
    /// Largest `|e_transported − e|_g` over the samples.
    pub transport_residual: f64,
    /// Largest `|⟨e_i, e_j⟩_g − δ_ij|` over the samples.
    pub orthonormality_err: f64,
}

/// Transverse Taylor data of `G` in Fermi coordinates at one time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FermiMetricJet {
    pub t: f64,
    /// Coefficients of `G^{tt}(t, y) = 1/J²` in powers of `y`.
    pub g_tt: Vec<f64>,
    pub g_ty: Vec<f64>,
    pub g_yy: Vec<f64>,
}

/// Exact Jacobi data at one Fermi point.
#[derive(Clone, Copy, Debug)]
pub struct JacobiPoint {
    pub j: f64,
    pub j_y: f64,
    pub j_t: f64,
}

fn unit_normal_vector(chart: &MetricChart, x: &[f64; 2], xi: &[f64; 2]) -> [f64; 2] {
    let (g, _) = chart.cometric_grad(x);
    // For a unit covector ξ, the vector (−ξ2, ξ1) has g-length sqrt(det g) = 1/sqrt(det G).
    let s = g.determinant().sqrt();
    [-xi[1] * s, xi[0] * s]
}

fn lower(chart: &MetricChart, x: &[f64; 2], v: &[f64; 2]) -> [f64; 2] {
    let (gc, _) = chart.cometric_grad(x);
    let g = gc.try_inverse().expect("positive cometric");
    let w = g * Vector2::from(*v);
    [w[0], w[1]]
}

fn gnorm_vec(chart: &MetricChart, x: &[f64; 2], v: &[f64; 2]) -> f64 {
    let l = lower(chart, x, v);
    (l[0] * v[0] + l[1] * v[1]).sqrt()
}

impl FermiFrame {
    pub fn chart(&self) -> &MetricChart {
        &self.path.chart
    }

    /// Unit normal vector at an arbitrary time.
    pub fn normal_at(&self, s: &Sample) -> [f64; 2] {
        unit_normal_vector(self.chart(), &s.x, &s.xi)
    }

    /// Unit normal covector at a path state.
    pub fn normal_covector(&self, s: &Sample) -> [f64; 2] {
        let e = self.normal_at(s);
        lower(self.chart(), &s.x, &e)
    }

    /// `exp_{γ(t)}(y e(t))` in chart coordinates (periodic axes unwrapped).
    pub fn from_fermi(&self, t: f64, y: f64) -> [f64; 2] {
        if self.is_flat_cylinder() {
            let (x0, v) = (self.path.start.x, self.path.start.xi);
            return [x0[0] + t * v[0] - y * v[1], x0[1] + t * v[1] + y * v[0]];
        }
        let s = self.path.state_at(t);
        self.shoot(&s, y)
    }

    fn shoot(&self, s: &Sample, y: f64) -> [f64; 2] {
        let eta = self.normal_covector(s);
        let chart = self.chart();
        let f = |_t: f64, v: &[f64]| {
            let (xd, pd) = hamilton_rhs(chart, &[v[0], v[1]], &[v[2], v[3]]);
            vec![xd[0], xd[1], pd[0], pd[1]]
        };
        let out = rk4_to(&f, 0.0, &[s.x[0], s.x[1], eta[0], eta[1]], y, FINE_STEP);
        [out[0], out[1]]
    }

    fn is_flat_cylinder(&self) -> bool {
        matches!(self.chart().spec, SurfaceSpec::FlatCylinder { .. })
    }

    /// Index of the cover interval containing `t` (the first one if several).
    pub fn interval_of(&self, t: f64) -> usize {
        self.cover.iter().position(|&(a, b)| t >= a && t <= b).unwrap_or(0)
    }

    /// Inverts the Fermi map for points in the tube over interval `hint`.
    /// Returns `Ok(None)` when the point is outside that part of the tube.
    pub fn to_fermi(&self, p: &[f64; 2], hint: usize) -> Result<Option<(f64, f64)>> {
        let (a, b) = *self
            .cover
            .get(hint)
            .ok_or_else(|| Error::Validation(format!("interval index {hint} out of range")))?;
        let chart = self.chart();
        if self.is_flat_cylinder() {
            return Ok(self.flat_to_fermi(p, a, b));
        }
        let speed_bound = 2.0;
        let coarse = self.radius * speed_bound + 2.0 * self.path.step;
        // Seeds: local minima of the chart distance over the interval.
        let idx: Vec<usize> = (0..self.path.samples.len())
            .filter(|&i| {
                let t = self.path.samples[i].t;
                t >= a - self.path.step && t <= b + self.path.step
            })
            .collect();
        let dist: Vec<f64> =
            idx.iter().map(|&i| chart.chart_distance(&self.path.samples[i].x, p)).collect();
        let mut best: Option<(f64, f64)> = None;
        for k in 0..idx.len() {
            let d = dist[k];
            if d > coarse {
                continue;
            }
            let left = if k > 0 { dist[k - 1] } else { f64::INFINITY };
            let right = if k + 1 < dist.len() { dist[k + 1] } else { f64::INFINITY };
            if d > left || d > right {
                continue;
            }
            let s = self.path.samples[idx[k]];
            let v = self.path.velocity(&s);
            let e = self.normal_at(&s);
            let dd = chart.delta(p, &s.x);
            let lv = lower(chart, &s.x, &v);
            let le = lower(chart, &s.x, &e);
            let mut t = s.t + lv[0] * dd[0] + lv[1] * dd[1];
            let mut y = le[0] * dd[0] + le[1] * dd[1];
            let mut converged = false;
            for _ in 0..50 {
                let f0 = chart.delta(&self.from_fermi(t, y), p);
                if f0[0].hypot(f0[1]) < 1e-13 {
                    converged = true;
                    break;
                }
                let hstep = 1e-6;
                let ft = chart.delta(&self.from_fermi(t + hstep, y), p);
                let fy = chart.delta(&self.from_fermi(t, y + hstep), p);
                let jac = Matrix2::new(
                    (ft[0] - f0[0]) / hstep,
                    (fy[0] - f0[0]) / hstep,
                    (ft[1] - f0[1]) / hstep,
                    (fy[1] - f0[1]) / hstep,
                );
                let Some(inv) = jac.try_inverse() else { break };
                let dx = inv * Vector2::new(f0[0], f0[1]);
                t -= dx[0];
                y -= dx[1];
                if dx.norm() < 1e-14 {
                    converged = true;
                    break;
                }
                if y.abs() > 4.0 * self.radius + 1.0 {
                    break;
                }
            }
            if !converged {
                let f0 = chart.delta(&self.from_fermi(t, y), p);
                if f0[0].hypot(f0[1]) > 1e-9 {
                    continue;
                }
            }
            if y.abs() < self.radius && t >= a && t <= b && best.map_or(true, |(_, by)| y.abs() < by.abs()) {
                best = Some((t, y));
            }
        }
        Ok(best)
    }

    /// Closed form on the flat cylinder, where the Fermi map is affine in
    /// each periodic image.
    fn flat_to_fermi(&self, p: &[f64; 2], a: f64, b: f64) -> Option<(f64, f64)> {
        let x0 = self.path.start.x;
        let v = self.path.start.xi;
        let e = [-v[1], v[0]];
        let period = self.chart().hi[0] - self.chart().lo[0];
        let d0 = [p[0] - x0[0], p[1] - x0[1]];
        let k0 = (d0[0] / period).round() as i64;
        let span = ((a.abs().max(b.abs()) + self.radius) / period).ceil() as i64 + 1;
        let mut best: Option<(f64, f64)> = None;
        for k in (k0 - span)..=(k0 + span) {
            let d = [d0[0] - k as f64 * period, d0[1]];
            let t = d[0] * v[0] + d[1] * v[1];
            let y = d[0] * e[0] + d[1] * e[1];
            if y.abs() < self.radius && t >= a && t <= b && best.map_or(true, |(_, by)| y.abs() < by.abs()) {
                best = Some((t, y));
            }
        }
        best
    }

    /// All Fermi preimages of `p`, one per cover interval that contains one.
    pub fn to_fermi_all(&self, p: &[f64; 2]) -> Result<Vec<(usize, f64, f64)>> {
        let mut out = Vec::new();
        for j in 0..self.cover.len() {
            if let Some((t, y)) = self.to_fermi(p, j)? {
                if !out.iter().any(|&(_, tt, yy): &(usize, f64, f64)| (tt - t).abs() < 1e-9 && (yy - y).abs() < 1e-9) {
                    out.push((j, t, y));
                }
            }
        }
        Ok(out)
    }

    /// Taylor coefficients of `J(t, ·)` up to `order`.
    pub fn j_jets(&self, t: f64, order: usize) -> Vec<f64> {
        let s = self.path.state_at(t);
        let eta = self.normal_covector(&s);
        j_series(self.chart(), &s.x, &eta, order)
    }

    pub fn fermi_metric_jets(&self, t: f64, order: usize) -> Result<FermiMetricJet> {
        if order + 1 > self.chart().jet_order {
            return invalid(format!(
                "Fermi metric jets of order {order} need chart jet order ≥ {}",
                order + 1
            ));
        }
        let j = self.j_jets(t, order);
        let jt = Taylor::from_coeffs(&j, order);
        let inv2 = (jt.clone() * jt).recip().univariate();
        if (inv2[0] - 1.0).abs() > 1e-6 || (order >= 1 && inv2[1].abs() > 1e-6) {
            return Err(Error::Numerical(format!(
                "Fermi metric normalization violated at t = {t}: G^tt = {} + {} y",
                inv2[0],
                inv2.get(1).copied().unwrap_or(0.0)
            )));
        }
        let mut g_yy = vec![0.0; order + 1];
        g_yy[0] = 1.0;
        Ok(FermiMetricJet { t, g_tt: inv2, g_ty: vec![0.0; order + 1], g_yy })
    }

    /// Exact `J`, `J_y`, `J_t` at `(t, y)` for each `y` in `ys`, from one
    /// march along the normal geodesic at `t`.
    pub fn jacobi_column(&self, t: f64, ys: &[f64]) -> Vec<JacobiPoint> {
        let s = self.path.state_at(t);
        let eta = self.normal_covector(&s);
        jacobi_column_from(self.chart(), &s.x, &eta, ys)
    }
}

/// Power series of the normal geodesic and of `J` by Picard iteration on
/// truncated Taylor arithmetic.
pub fn j_series(chart: &MetricChart, x0: &[f64; 2], eta0: &[f64; 2], order: usize) -> Vec<f64> {
    let n = order + 2;
    let cst = |v: f64| Taylor::constant(v, 1, n);
    let mut x = [cst(x0[0]), cst(x0[1])];
    let mut p = [cst(eta0[0]), cst(eta0[1])];
    let integrate = |s: &Taylor<f64>, c0: f64| {
        let c = s.univariate();
        let mut out = vec![0.0; n + 1];
        out[0] = c0;
        for k in 1..=n {
            out[k] = c[k - 1] / k as f64;
        }
        Taylor::from_coeffs(&out, n)
    };
    for _ in 0..=n {
        let [a, b, c] = chart.cometric_generic(&x);
        let xd = [a.clone() * p[0].clone() + b.clone() * p[1].clone(), b * p[0].clone() + c * p[1].clone()];
        let nx = [
            Taylor::variable(x[0].clone(), 0, 2, 1),
            Taylor::variable(x[1].clone(), 1, 2, 1),
        ];
        let [da, db, dc] = chart.cometric_generic(&nx);
        let quad = |i: usize, j: usize| {
            let (a, b, c) = (da.coeff(i, j).clone(), db.coeff(i, j).clone(), dc.coeff(i, j).clone());
            a * p[0].clone() * p[0].clone() + (b * p[0].clone() * p[1].clone()).scale(2.0) + c * p[1].clone() * p[1].clone()
        };
        let pd = [quad(1, 0).scale(-0.5), quad(0, 1).scale(-0.5)];
        x = [integrate(&xd[0], x0[0]), integrate(&xd[1], x0[1])];
        p = [integrate(&pd[0], eta0[0]), integrate(&pd[1], eta0[1])];
    }
    let k = chart.curvature_generic(&x).univariate();
    let mut j = vec![0.0; order + 1];
    j[0] = 1.0;
    for m in 0..order.saturating_sub(1) {
        let s: f64 = (0..=m).map(|i| k[i] * j[m - i]).sum();
        j[m + 2] = -s / ((m + 2) * (m + 1)) as f64;
    }
    j
}

fn jacobi_column_from(chart: &MetricChart, x0: &[f64; 2], eta0: &[f64; 2], ys: &[f64]) -> Vec<JacobiPoint> {
    // State: x, η, J, J', W = J_t, W'. The unit vector E along ∂_t (up to the
    // factor J) is minus the rotated normal velocity.
    let f = |_y: f64, v: &[f64]| {
        let x = [v[0], v[1]];
        let eta = [v[2], v[3]];
        let (xd, pd) = hamilton_rhs(chart, &x, &eta);
        let tx = [Taylor::variable(v[0], 0, 2, 1), Taylor::variable(v[1], 1, 2, 1)];
        let kt = chart.curvature_generic(&tx);
        let k = *kt.coeff(0, 0);
        let dk = [*kt.coeff(1, 0), *kt.coeff(0, 1)];
        let rn = unit_normal_vector(chart, &x, &eta);
        let e = [-rn[0], -rn[1]];
        let dk_e = dk[0] * e[0] + dk[1] * e[1];
        vec![xd[0], xd[1], pd[0], pd[1], v[5], -k * v[4], v[7], -k * v[6] - dk_e * v[4] * v[4]]
    };
    let y0 = [x0[0], x0[1], eta0[0], eta0[1], 1.0, 0.0, 0.0, 0.0];
    rk4_at_times(&f, 0.0, &y0, ys, FINE_STEP)
        .into_iter()
        .map(|v| JacobiPoint { j: v[4], j_y: v[5], j_t: v[6] })
        .collect()
}

/// Default transverse radius: `min(0.1, half the distance between distinct
/// self-intersection points)`.
pub fn default_radius(path: &GeodesicPath) -> f64 {
    let pts: Vec<[f64; 2]> = path.self_intersections.iter().map(|s| s.point).collect();
    let mut r: f64 = 0.1;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = path.chart.chart_distance(&pts[i], &pts[j]);
            if d > 1e-9 {
                r = r.min(0.5 * d);
            }
        }
    }
    r
}

fn build_cover(path: &GeodesicPath) -> Vec<(f64, f64)> {
    let (lo, hi) = (path.t_min(), path.t_max());
    let mut times: Vec<f64> = path
        .self_intersections
        .iter()
        .flat_map(|s| [s.t, s.s])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if times.len() < 2 {
        return vec![(lo, hi)];
    }
    let mut cuts = Vec::new();
    let mut overlap = f64::INFINITY;
    for w in times.windows(2) {
        cuts.push(0.5 * (w[0] + w[1]));
        overlap = overlap.min(0.25 * (w[1] - w[0]));
    }
    let overlap = overlap.min(0.1);
    let mut out = Vec::new();
    let mut start = lo;
    for c in cuts {
        out.push((start, c + overlap));
        start = c - overlap;
    }
    out.push((start, hi));
    out
}

pub fn build_frame(chart: &MetricChart, path: &GeodesicPath, radius: Option<f64>) -> Result<FermiFrame> {
    let radius = radius.unwrap_or_else(|| default_radius(path));
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid("Fermi radius must be positive");
    }
    let cover = build_cover(path);
    let times: Vec<f64> = path.samples.iter().map(|s| s.t).collect();
    let normals: Vec<[f64; 2]> =
        path.samples.iter().map(|s| unit_normal_vector(chart, &s.x, &s.xi)).collect();

    // Parallel transport of the initial normal from the first sample.
    let s0 = path.samples[0];
    let e0 = normals[0];
    let f = |_t: f64, v: &[f64]| {
        let x = [v[0], v[1]];
        let (xd, pd) = hamilton_rhs(chart, &x, &[v[2], v[3]]);
        let gam = chart.christoffel(&x).unwrap_or([[[0.0; 2]; 2]; 2]);
        let mut de = [0.0; 2];
        for (i, d) in de.iter_mut().enumerate() {
            for j in 0..2 {
                for k in 0..2 {
                    *d -= gam[i][j][k] * xd[j] * v[4 + k];
                }
            }
        }
        vec![xd[0], xd[1], pd[0], pd[1], de[0], de[1]]
    };
    let transported = rk4_at_times(&f, s0.t, &[s0.x[0], s0.x[1], s0.xi[0], s0.xi[1], e0[0], e0[1]], &times, FINE_STEP);
    let mut transport_residual: f64 = 0.0;
    let mut orth: f64 = 0.0;
    for ((s, e), tr) in path.samples.iter().zip(&normals).zip(&transported) {
        let d = [tr[4] - e[0], tr[5] - e[1]];
        transport_residual = transport_residual.max(gnorm_vec(chart, &s.x, &d));
        let v = path.velocity(s);
        let le = lower(chart, &s.x, e);
        orth = orth.max((le[0] * e[0] + le[1] * e[1] - 1.0).abs());
        orth = orth.max((le[0] * v[0] + le[1] * v[1]).abs());
    }
    let frame = FermiFrame {
        path: path.clone(),
        radius,
        cover,
        times,
        normals,
        transport_residual,
        orthonormality_err: orth,
    };
    // Focal check: the Jacobi field must stay well away from zero in the tube.
    let n_check = 40usize;
    let (t_lo, t_hi) = (path.t_min(), path.t_max());
    let mut min_j = f64::INFINITY;
    let mut safe = f64::INFINITY;
    for i in 0..=n_check {
        let t = t_lo + (t_hi - t_lo) * i as f64 / n_check as f64;
        let ys: Vec<f64> = (1..=8).flat_map(|k| {
            let y = radius * k as f64 / 8.0;
            [y, -y]
        }).collect();
        let col = frame.jacobi_column(t, &ys);
        for (y, jp) in ys.iter().zip(&col) {
            min_j = min_j.min(jp.j);
            if jp.j < 0.25 {
                safe = safe.min(y.abs());
            }
        }
    }
    if min_j < 0.25 {
        return Err(Error::Domain(format!(
            "Fermi radius {radius} too large: Jacobi field drops to {min_j:.3}; max safe radius ≈ {:.3}",
            0.5 * safe
        )));
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{trace, TraceOptions, UnitCovector};
    use crate::manifold::{build_surface, Bump, Profile, SurfaceSpec};
    use std::f64::consts::PI;

    #[test]
    fn flat_frame_is_rigid() {
        let c = build_surface(SurfaceSpec::FlatCylinder { a: 1.0 }, 6, None).unwrap();
        let al: f64 = 0.7;
        let u = UnitCovector::normalized(&c, [0.2, 0.5], [al.cos(), al.sin()]).unwrap();
        let p = trace(&c, u, &TraceOptions::default()).unwrap();
        let f = build_frame(&c, &p, None).unwrap();
        for e in &f.normals {
            assert!((e[0] + al.sin()).abs() < 1e-12 && (e[1] - al.cos()).abs() < 1e-12);
        }
        let q = f.from_fermi(0.3, 0.05);
        let want = [0.2 + 0.3 * al.cos() - 0.05 * al.sin(), 0.5 + 0.3 * al.sin() + 0.05 * al.cos()];
        assert!((q[0] - want[0]).abs() < 1e-12 && (q[1] - want[1]).abs() < 1e-12);
        let (t, y) = f.to_fermi(&q, 0).unwrap().unwrap();
        assert!((t - 0.3).abs() < 1e-12 && (y - 0.05).abs() < 1e-12);
    }

    #[test]
    fn sphere_equator_jets_match_cosine() {
        let c = build_surface(SurfaceSpec::SpherePatch { cap: 0.4 }, 8, None).unwrap();
        let u = UnitCovector::normalized(&c, [0.0, PI / 2.0], [0.3, 1.0]).unwrap();
        let p = trace(&c, u, &TraceOptions::default()).unwrap();
        let f = build_frame(&c, &p, None).unwrap();
        let j = f.j_jets(0.4, 6);
        let want = [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0, 0.0, -1.0 / 720.0];
        for (a, b) in j.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{j:?}");
        }
        let col = f.jacobi_column(0.4, &[0.05, -0.08]);
        assert!((col[0].j - 0.05f64.cos()).abs() < 1e-11);
        assert!((col[1].j_y - 0.08f64.sin()).abs() < 1e-11);
        assert!(col[0].j_t.abs() < 1e-11);
        let m = f.fermi_metric_jets(0.4, 4).unwrap();
        assert!((m.g_tt[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_on_curved_surfaces() {
        let surfaces = [
            build_surface(SurfaceSpec::PerturbedFlat { amplitude: 0.2, bump: Bump::default() }, 6, None).unwrap(),
            build_surface(
                SurfaceSpec::SurfaceOfRevolution { profile: Profile::parse("wavy:1.0,0.2,3.0").unwrap() },
                6,
                None,
            )
            .unwrap(),
        ];
        for c in surfaces {
            let x0 = c.interior_point(0.3, 0.5);
            let u = UnitCovector::normalized(&c, x0, [0.6, 0.8]).unwrap();
            let p = trace(&c, u, &TraceOptions::default()).unwrap();
            let f = build_frame(&c, &p, Some(0.05)).unwrap();
            assert!(f.transport_residual < 1e-8, "{}", f.transport_residual);
            for &(t, y) in &[(0.1, 0.03), (-0.2, -0.04), (0.25, 0.0)] {
                let q = f.from_fermi(t, y);
                let (tt, yy) = f.to_fermi(&q, 0).unwrap().unwrap();
                assert!((tt - t).abs() < 1e-8 && (yy - y).abs() < 1e-8, "{:?}", c.spec);
            }
            // Exact J against the jet expansion.
            let t = 0.1;
            let j = f.j_jets(t, 8);
            let y: f64 = 0.02;
            let series: f64 = j.iter().enumerate().map(|(k, c)| c * y.powi(k as i32)).sum();
            let exact = f.jacobi_column(t, &[y])[0].j;
            assert!((series - exact).abs() < 1e-11, "{series} vs {exact}");
            // J_t against a central difference.
            let h = 1e-4;
            let jp = f.jacobi_column(t + h, &[y])[0].j;
            let jm = f.jacobi_column(t - h, &[y])[0].j;
            let jt = f.jacobi_column(t, &[y])[0].j_t;
            assert!((jt - (jp - jm) / (2.0 * h)).abs() < 1e-7);
        }
    }
}

//! Admissible pairs of geodesics.
//!
//! A pair generates `α = (x0, ξ0)` when both geodesics start at `x0`, their
//! covectors sum to `t0·ξ0` with `0 < t0 < 2`, neither returns to `x0`, and
//! `x0` is their only common point.

use crate::error::{invalid, Error, Result};
use crate::geodesic::{path_intersections, trace, GeodesicPath, Intersection, PathStatus, TraceOptions, UnitCovector};
use crate::manifold::MetricChart;
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub base_coincidence_err: f64,
    pub sum_direction_err: f64,
    pub t0: f64,
    pub self_intersection_violations: Vec<Intersection>,
    pub cross_intersection_violations: Vec<Intersection>,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissiblePair {
    pub alpha: UnitCovector,
    pub gamma1: GeodesicPath,
    pub gamma2: GeodesicPath,
    pub t0: f64,
    pub report: AdmissibilityReport,
}

/// Base data of the ω-pair construction: `ζ1 + ζ2 = t0 ξ0` at `x0`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OmegaBase {
    pub x0: [f64; 2],
    pub xi0: [f64; 2],
    pub zeta1: [f64; 2],
    pub zeta2: [f64; 2],
}

fn inner(g: &Matrix2<f64>, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (Vector2::from(*a).transpose() * g * Vector2::from(*b))[0]
}

/// The pair `(ω1, ω2)` of unit covectors at the query point whose sum is
/// parallel to the query covector, together with the base value `t0`.
pub fn omega_pair(
    chart: &MetricChart,
    base: &OmegaBase,
    query: &UnitCovector,
) -> Result<([f64; 2], [f64; 2], f64)> {
    let g0 = chart.cometric(&base.x0)?;
    let c = inner(&g0, &base.zeta1, &base.xi0);
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!(
            "outside validity neighborhood: ζ1·ξ0 = {c} is not in (0, 1)"
        )));
    }
    let g = chart.cometric(&query.x)?;
    let zn = inner(&g, &base.zeta1, &base.zeta1).sqrt();
    let zeta = [base.zeta1[0] / zn, base.zeta1[1] / zn];
    let xi = query.xi;
    let z = inner(&g, &zeta, &xi);
    if z * z >= 1.0 {
        return Err(Error::Domain(
            "outside validity neighborhood: query direction parallel to ζ(x)".into(),
        ));
    }
    // Root of (1−c²)α² + 2z(1−c²)α + z² − c² = 0 that vanishes at the base.
    let alpha = -z + c * (1.0 - z * z).sqrt() / (1.0 - c * c).sqrt();
    let norm = (1.0 + alpha * alpha + 2.0 * alpha * z).sqrt();
    let w1 = [(zeta[0] + alpha * xi[0]) / norm, (zeta[1] + alpha * xi[1]) / norm];
    let w2 = [2.0 * c * xi[0] - w1[0], 2.0 * c * xi[1] - w1[1]];
    Ok((w1, w2, 2.0 * c))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CylinderRotation {
    pub alpha: f64,
    pub t0: f64,
    pub xi1: [f64; 2],
    pub xi2: [f64; 2],
    /// Value of `a |sin 2α| / |ξ02² − sin² α|`, which must stay below `2π`.
    pub constraint: f64,
}

/// Below this vertical component the near-perpendicular branch is used.
pub const CYLINDER_BRANCH_THRESHOLD: f64 = 0.25;
const MIN_VERTICAL: f64 = 1e-3;

fn rotation_at(xi0: [f64; 2], alpha: f64, a: f64) -> CylinderRotation {
    let (s, c) = alpha.sin_cos();
    let xi1 = [xi0[0] * c - xi0[1] * s, xi0[1] * c + xi0[0] * s];
    let xi2 = [xi0[0] * c + xi0[1] * s, xi0[1] * c - xi0[0] * s];
    let constraint = a * (2.0 * alpha).sin().abs() / (xi0[1] * xi0[1] - s * s).abs();
    CylinderRotation { alpha, t0: 2.0 * c, xi1, xi2, constraint }
}

fn rotation_ok(r: &CylinderRotation) -> bool {
    let c = r.alpha.cos();
    r.xi1[1].abs() > MIN_VERTICAL
        && r.xi2[1].abs() > MIN_VERTICAL
        && c > 0.0
        && c < 1.0
        && r.constraint < 2.0 * PI
}

/// Rotation angle making the pair `e^{±iα} ξ0` admissible on `S¹ × [0, a]`.
pub fn cylinder_rotation(xi0: [f64; 2], a: f64) -> Result<CylinderRotation> {
    let n = xi0[0].hypot(xi0[1]);
    if (n - 1.0).abs() > 1e-10 {
        return invalid(format!("ξ0 must be a unit vector, |ξ0| = {n}"));
    }
    if !(a > 0.0) {
        return invalid("cylinder height must be positive");
    }
    if xi0[1].abs() >= CYLINDER_BRANCH_THRESHOLD {
        let mut alpha: f64 = 0.2;
        while alpha > 1e-12 {
            let r = rotation_at(xi0, alpha, a);
            if rotation_ok(&r) {
                return Ok(r);
            }
            alpha *= 0.8;
        }
    } else {
        let mut beta: f64 = 0.1;
        while beta > 1e-12 {
            let r = rotation_at(xi0, PI / 2.0 - beta, a);
            if rotation_ok(&r) {
                return Ok(r);
            }
            beta *= 0.8;
        }
    }
    Err(Error::Numerical(format!("no rotation angle found for ξ0 = {xi0:?}, a = {a}")))
}

/// Times `t ≠ 0` at which `path` passes through `x0`.
fn returns_to(path: &GeodesicPath, x0: &[f64; 2], tol: f64, min_sep: f64) -> Vec<Intersection> {
    let chart = &path.chart;
    let (lo, hi) = path.interior_range();
    let speed = path
        .samples
        .iter()
        .map(|s| {
            let v = path.velocity(s);
            v[0].hypot(v[1])
        })
        .fold(0.0, f64::max);
    let coarse = 1.5 * path.step * speed + tol;
    let mut out: Vec<Intersection> = Vec::new();
    for s in &path.samples {
        if s.t < lo || s.t > hi || s.t.abs() < min_sep {
            continue;
        }
        if chart.chart_distance(&s.x, x0) > coarse {
            continue;
        }
        let mut t = s.t;
        for _ in 0..30 {
            let st = path.state_at(t);
            let d = chart.delta(&st.x, x0);
            let v = path.velocity(&st);
            let dt = -(d[0] * v[0] + d[1] * v[1]) / (v[0] * v[0] + v[1] * v[1]);
            t += dt;
            if dt.abs() < 1e-14 {
                break;
            }
        }
        let st = path.state_at(t);
        let dist = chart.chart_distance(&st.x, x0);
        if dist <= tol && t >= lo && t <= hi && t.abs() >= min_sep && !out.iter().any(|o| (o.t - t).abs() < 1e-6) {
            out.push(Intersection { t, s: 0.0, point: chart.wrap(&st.x) });
        }
    }
    out
}

/// Verifies the admissibility conditions for a pair of traced geodesics.
/// `expected` is the covector the pair should generate, when known.
pub fn check_admissible(
    chart: &MetricChart,
    g1: &GeodesicPath,
    g2: &GeodesicPath,
    tol: f64,
    expected: Option<[f64; 2]>,
) -> Result<AdmissibilityReport> {
    for (k, g) in [g1, g2].iter().enumerate() {
        if g.status != PathStatus::Nontangential {
            return Err(Error::Domain(format!(
                "geodesic {} is not nontangential ({:?})",
                k + 1,
                g.status
            )));
        }
    }
    let step = g1.step.max(g2.step);
    let tol = tol.max(5.0 * step);
    let x0 = g1.start.x;
    let base_coincidence_err = chart.chart_distance(&g1.start.x, &g2.start.x);
    let g = chart.cometric(&x0)?;
    let sum = [g1.start.xi[0] + g2.start.xi[0], g1.start.xi[1] + g2.start.xi[1]];
    let t0 = inner(&g, &sum, &sum).sqrt();
    let sum_direction_err = match expected {
        Some(e) => {
            let d = [sum[0] - t0 * e[0], sum[1] - t0 * e[1]];
            inner(&g, &d, &d).sqrt()
        }
        None => 0.0,
    };
    let min_sep = 10.0 * step;
    let mut self_v = returns_to(g1, &x0, tol, min_sep);
    self_v.extend(returns_to(g2, &x0, tol, min_sep));
    let cross: Vec<Intersection> =
        path_intersections(g1, g1.interior_range(), g2, g2.interior_range(), tol, None)
            .into_iter()
            .filter(|i| !(i.t.abs() < min_sep && i.s.abs() < min_sep))
            .collect();
    let passed = base_coincidence_err <= 1e-8
        && sum_direction_err <= 1e-8
        && t0 > 1e-8
        && t0 < 2.0 - 1e-8
        && self_v.is_empty()
        && cross.is_empty();
    Ok(AdmissibilityReport {
        base_coincidence_err,
        sum_direction_err,
        t0,
        self_intersection_violations: self_v,
        cross_intersection_violations: cross,
        tol,
        passed,
    })
}

/// Traces both geodesics from covectors at `x0` and checks the pair.
pub fn build_pair(
    chart: &MetricChart,
    x0: [f64; 2],
    zeta1: [f64; 2],
    zeta2: [f64; 2],
    opts: &TraceOptions,
    tol: f64,
) -> Result<AdmissiblePair> {
    let u1 = UnitCovector::normalized(chart, x0, zeta1)?;
    let u2 = UnitCovector::normalized(chart, x0, zeta2)?;
    let gamma1 = trace(chart, u1, opts)?;
    let gamma2 = trace(chart, u2, opts)?;
    let g = chart.cometric(&x0)?;
    let sum = [u1.xi[0] + u2.xi[0], u1.xi[1] + u2.xi[1]];
    let t0 = inner(&g, &sum, &sum).sqrt();
    if t0 <= 0.0 {
        return Err(Error::NotAdmissible("covectors cancel".into()));
    }
    let xi = [sum[0] / t0, sum[1] / t0];
    let report = check_admissible(chart, &gamma1, &gamma2, tol, Some(xi))?;
    Ok(AdmissiblePair { alpha: UnitCovector { x: x0, xi }, gamma1, gamma2, t0: report.t0, report })
}

/// The rotated pair on a flat cylinder chart.
pub fn cylinder_pair(chart: &MetricChart, x0: [f64; 2], xi0: [f64; 2], opts: &TraceOptions, tol: f64) -> Result<AdmissiblePair> {
    let a = chart.hi[1] - chart.lo[1];
    let r = cylinder_rotation(xi0, a)?;
    build_pair(chart, x0, r.xi1, r.xi2, opts, tol)
}

/// The pair `(ζ1, ζ2)` with `ζ2` the mirror image of `ζ1` across `ξ0`, so
/// that both are unit covectors and `ζ1 + ζ2 = 2⟨ζ1, ξ0⟩ ξ0`.
pub fn reflected_pair(
    chart: &MetricChart,
    x0: [f64; 2],
    xi0: [f64; 2],
    zeta1: [f64; 2],
    opts: &TraceOptions,
    tol: f64,
) -> Result<AdmissiblePair> {
    let a = UnitCovector::normalized(chart, x0, xi0)?;
    let z = UnitCovector::normalized(chart, x0, zeta1)?.xi;
    let c = inner(&chart.cometric(&x0)?, &z, &a.xi);
    build_pair(chart, x0, z, [2.0 * c * a.xi[0] - z[0], 2.0 * c * a.xi[1] - z[1]], opts, tol)
}

/// Neighborhood grid in `(x1, x2, direction angle)` around the generated point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub radius: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyMember {
    pub alpha: UnitCovector,
    /// Grid offset normalized to `[−1, 1]³`.
    pub offset: [f64; 3],
    pub t0: Option<f64>,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyReport {
    pub members: Vec<FamilyMember>,
    pub passing: Vec<AdmissiblePair>,
    /// Largest radius (in grid units times `radius`) within which every point passed.
    pub verified_radius: f64,
    /// Largest `|t0(α) − t0(α0)|` across passing members.
    pub t0_drift: f64,
}

pub fn family(
    chart: &MetricChart,
    pair0: &AdmissiblePair,
    grid: PhaseGrid,
    opts: &TraceOptions,
    tol: f64,
) -> Result<FamilyReport> {
    let recheck = check_admissible(chart, &pair0.gamma1, &pair0.gamma2, tol, Some(pair0.alpha.xi))?;
    if !recheck.passed {
        return Err(Error::NotAdmissible("center pair failed re-verification".into()));
    }
    let base = OmegaBase {
        x0: pair0.alpha.x,
        xi0: pair0.alpha.xi,
        zeta1: pair0.gamma1.start.xi,
        zeta2: pair0.gamma2.start.xi,
    };
    let n = grid.n.max(1);
    let offsets: Vec<[f64; 3]> = {
        let u = |i: usize| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
        let mut v = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    v.push([u(i), u(j), u(k)]);
                }
            }
        }
        v
    };
    let g0 = chart.metric(&base.x0)?;
    // Direction angle measured on the velocity of the generated covector.
    let v0 = g0.try_inverse().expect("positive metric") * Vector2::from(base.xi0);
    let theta0 = v0[1].atan2(v0[0]);
    let results: Vec<(FamilyMember, Option<AdmissiblePair>)> = offsets
        .par_iter()
        .map(|o| {
            let x = [base.x0[0] + grid.radius * o[0], base.x0[1] + grid.radius * o[1]];
            let th = theta0 + grid.radius * o[2];
            let attempt = (|| -> Result<AdmissiblePair> {
                if grid.radius == 0.0 {
                    return Ok(pair0.clone());
                }
                let q = UnitCovector::from_velocity(chart, x, [th.cos(), th.sin()])?;
                let (w1, w2, _) = omega_pair(chart, &base, &q)?;
                let p = build_pair(chart, x, w1, w2, opts, tol)?;
                Ok(p)
            })();
            match attempt {
                Ok(p) => {
                    let m = FamilyMember {
                        alpha: p.alpha,
                        offset: *o,
                        t0: Some(p.t0),
                        passed: p.report.passed,
                        error: None,
                    };
                    let keep = p.report.passed.then_some(p);
                    (m, keep)
                }
                Err(e) => (
                    FamilyMember {
                        alpha: UnitCovector { x, xi: base.xi0 },
                        offset: *o,
                        t0: None,
                        passed: false,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let mut verified = f64::INFINITY;
    for (m, _) in &results {
        if !m.passed {
            let r = m.offset.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            verified = verified.min(r);
        }
    }
    let verified_radius = if verified.is_infinite() { grid.radius } else { grid.radius * verified };
    let t0_drift = results
        .iter()
        .filter_map(|(_, p)| p.as_ref().map(|p| (p.t0 - pair0.t0).abs()))
        .fold(0.0, f64::max);
    let (members, passing): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(FamilyReport {
        members,
        passing: passing.into_iter().flatten().collect(),
        verified_radius,
        t0_drift,
    })
}

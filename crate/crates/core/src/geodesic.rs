//! Unit-speed geodesics from the Hamiltonian `H = ½ G(x)ξ·ξ`.
//!
//! Paths are sampled on a uniform arclength grid in both directions from the
//! start point, with boundary crossings located by bisection and a short
//! overshoot into the chart margin. Off-grid states are obtained by a fine
//! RK4 march, which keeps every derived quantity smooth in `t`.

use crate::error::{invalid, Error, Result};
use crate::manifold::MetricChart;
use crate::ode::{rk4_at_times, rk4_to};
use crate::quad::gl_rule;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Substep used whenever states are evaluated off the sample grid.
pub const FINE_STEP: f64 = 1e-3;
/// Normal velocity below which a boundary crossing counts as tangential.
pub const TANGENCY_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCovector {
    pub x: [f64; 2],
    pub xi: [f64; 2],
}

impl UnitCovector {
    /// Rescales `xi` to unit cometric length at `x`.
    pub fn normalized(chart: &MetricChart, x: [f64; 2], xi: [f64; 2]) -> Result<Self> {
        let g = chart.cometric(&x)?;
        let n2 = g[(0, 0)] * xi[0] * xi[0] + 2.0 * g[(0, 1)] * xi[0] * xi[1] + g[(1, 1)] * xi[1] * xi[1];
        if !(n2 > 0.0 && n2.is_finite()) {
            return invalid("covector must be nonzero");
        }
        let n = n2.sqrt();
        Ok(Self { x, xi: [xi[0] / n, xi[1] / n] })
    }

    /// Covector whose velocity `Gξ` points along the chart vector `v`.
    pub fn from_velocity(chart: &MetricChart, x: [f64; 2], v: [f64; 2]) -> Result<Self> {
        let g = chart.metric(&x)?;
        let xi = [g[(0, 0)] * v[0] + g[(0, 1)] * v[1], g[(1, 0)] * v[0] + g[(1, 1)] * v[1]];
        Self::normalized(chart, x, xi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStatus {
    Nontangential,
    Tangential,
    Trapped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: [f64; 2],
    pub xi: [f64; 2],
}

/// Where the path meets the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub axis: usize,
    /// `true` for the upper face of the axis.
    pub upper: bool,
    /// Signed normal velocity `ẋ_axis / sqrt(G_axis,axis)`.
    pub normal_velocity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub t: f64,
    pub s: f64,
    pub point: [f64; 2],
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceOptions {
    pub step: f64,
    pub tol: f64,
    pub max_length: f64,
    pub tangency: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { step: 1e-2, tol: 1e-10, max_length: 200.0, tangency: TANGENCY_THRESHOLD }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub chart: MetricChart,
    pub start: UnitCovector,
    pub step: f64,
    /// Ascending in `t`, uniform spacing `step`, containing `t = 0`.
    pub samples: Vec<Sample>,
    pub entry: Option<Crossing>,
    pub exit: Option<Crossing>,
    pub status: PathStatus,
    pub nontangential: bool,
    pub reason: Option<String>,
    pub self_intersections: Vec<Intersection>,
}

/// Right-hand side of Hamilton's equations for `H = ½ Gξ·ξ`.
pub fn hamilton_rhs(chart: &MetricChart, x: &[f64; 2], xi: &[f64; 2]) -> ([f64; 2], [f64; 2]) {
    let (g, dg) = chart.cometric_grad(x);
    let xdot = [g[(0, 0)] * xi[0] + g[(0, 1)] * xi[1], g[(1, 0)] * xi[0] + g[(1, 1)] * xi[1]];
    let quad = |m: &nalgebra::Matrix2<f64>| {
        m[(0, 0)] * xi[0] * xi[0] + 2.0 * m[(0, 1)] * xi[0] * xi[1] + m[(1, 1)] * xi[1] * xi[1]
    };
    (xdot, [-0.5 * quad(&dg[0]), -0.5 * quad(&dg[1])])
}

fn rhs_vec(chart: &MetricChart) -> impl Fn(f64, &[f64]) -> Vec<f64> + '_ {
    move |_t, y| {
        let (xd, pd) = hamilton_rhs(chart, &[y[0], y[1]], &[y[2], y[3]]);
        vec![xd[0], xd[1], pd[0], pd[1]]
    }
}

fn cometric_norm(chart: &MetricChart, x: &[f64; 2], xi: &[f64; 2]) -> f64 {
    let (g, _) = chart.cometric_grad(x);
    (g[(0, 0)] * xi[0] * xi[0] + 2.0 * g[(0, 1)] * xi[0] * xi[1] + g[(1, 1)] * xi[1] * xi[1]).sqrt()
}

/// Index of the non-periodic face crossed by `x`, if any.
fn outside_axes(chart: &MetricChart, x: &[f64; 2]) -> Vec<(usize, bool)> {
    (0..2)
        .filter(|&k| !chart.periodic[k])
        .filter_map(|k| {
            if x[k] < chart.lo[k] {
                Some((k, false))
            } else if x[k] > chart.hi[k] {
                Some((k, true))
            } else {
                None
            }
        })
        .collect()
}

struct HalfTrace {
    samples: Vec<Sample>,
    crossing: Option<Crossing>,
}

fn march(chart: &MetricChart, start: &UnitCovector, dir: f64, opts: &TraceOptions) -> Result<HalfTrace> {
    let f = rhs_vec(chart);
    let h = dir * opts.step;
    let mut y = vec![start.x[0], start.x[1], start.xi[0], start.xi[1]];
    let mut samples = Vec::new();
    let mut crossing: Option<Crossing> = None;
    let mut k = 0usize;
    loop {
        let t = k as f64 * h;
        if crossing.is_none() && t.abs() >= opts.max_length {
            break;
        }
        if let Some(c) = &crossing {
            if (t - c.t).abs() >= chart.margin {
                break;
            }
        }
        let y_next = {
            let mut v = crate::ode::rk4_step(&f, t, &y, h);
            let x = [v[0], v[1]];
            let n = cometric_norm(chart, &x, &[v[2], v[3]]);
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::Numerical("geodesic state became singular".into()));
            }
            v[2] /= n;
            v[3] /= n;
            v
        };
        let xn = [y_next[0], y_next[1]];
        if !chart.in_extended(&xn) {
            break;
        }
        if crossing.is_none() {
            let out = outside_axes(chart, &xn);
            if !out.is_empty() {
                let mut best: Option<Crossing> = None;
                for (axis, upper) in out {
                    let face = if upper { chart.hi[axis] } else { chart.lo[axis] };
                    let (mut a, mut b) = (0.0, h);
                    while (b - a).abs() > opts.tol {
                        let m = 0.5 * (a + b);
                        let ym = rk4_to(&f, t, &y, t + m, FINE_STEP);
                        if (ym[axis] - face) * (if upper { 1.0 } else { -1.0 }) > 0.0 {
                            b = m;
                        } else {
                            a = m;
                        }
                    }
                    let tc = t + 0.5 * (a + b);
                    let yc = rk4_to(&f, t, &y, tc, FINE_STEP);
                    let (g, _) = chart.cometric_grad(&[yc[0], yc[1]]);
                    let (xd, _) = hamilton_rhs(chart, &[yc[0], yc[1]], &[yc[2], yc[3]]);
                    let nv = xd[axis] / g[(axis, axis)].sqrt();
                    if best.map_or(true, |c| (tc - c.t) * dir < 0.0) {
                        best = Some(Crossing { t: tc, axis, upper, normal_velocity: nv });
                    }
                }
                crossing = best;
            }
        }
        samples.push(Sample { t, x: [y[0], y[1]], xi: [y[2], y[3]] });
        y = y_next;
        k += 1;
    }
    let t = k as f64 * h;
    samples.push(Sample { t, x: [y[0], y[1]], xi: [y[2], y[3]] });
    Ok(HalfTrace { samples, crossing })
}

pub fn trace(chart: &MetricChart, start: UnitCovector, opts: &TraceOptions) -> Result<GeodesicPath> {
    if !(opts.step > 0.0 && opts.tol > 0.0 && opts.max_length > 0.0) {
        return invalid("step, tol and max_length must be positive");
    }
    if !chart.in_domain(&start.x) {
        return invalid(format!("start point {:?} is not inside the domain", start.x));
    }
    let norm = cometric_norm(chart, &start.x, &start.xi);
    if (norm - 1.0).abs() > 1e-10 {
        return invalid(format!("start covector has |ξ|_g = {norm}, expected 1"));
    }
    let opts = TraceOptions { step: opts.step.min(1e-2), ..*opts };
    let fwd = march(chart, &start, 1.0, &opts)?;
    let back = march(chart, &start, -1.0, &opts)?;
    let mut samples: Vec<Sample> = back.samples.into_iter().skip(1).rev().collect();
    samples.extend(fwd.samples);

    let (status, reason) = match (&back.crossing, &fwd.crossing) {
        (Some(a), Some(b)) => {
            if a.normal_velocity.abs() > opts.tangency && b.normal_velocity.abs() > opts.tangency {
                (PathStatus::Nontangential, None)
            } else {
                (
                    PathStatus::Tangential,
                    Some(format!(
                        "normal velocity at boundary below {} (entry {:.3e}, exit {:.3e})",
                        opts.tangency, a.normal_velocity, b.normal_velocity
                    )),
                )
            }
        }
        _ => (
            PathStatus::Trapped,
            Some(format!("no boundary crossing within length {}", opts.max_length)),
        ),
    };
    let mut path = GeodesicPath {
        chart: chart.clone(),
        start,
        step: opts.step,
        samples,
        entry: back.crossing,
        exit: fwd.crossing,
        nontangential: status == PathStatus::Nontangential,
        status,
        reason,
        self_intersections: Vec::new(),
    };
    let itol = (opts.tol * 1e3).max(1e-8);
    path.self_intersections = self_intersections(&path, itol);
    Ok(path)
}

impl GeodesicPath {
    /// Entry time `T1` (the path enters at `t = −T1`).
    pub fn t1(&self) -> Option<f64> {
        self.entry.map(|c| -c.t)
    }

    /// Exit time `T2`.
    pub fn t2(&self) -> Option<f64> {
        self.exit.map(|c| c.t)
    }

    /// Parameter range inside the closed domain, or the full sampled range
    /// for trapped paths.
    pub fn interior_range(&self) -> (f64, f64) {
        let lo = self.entry.map_or(self.t_min(), |c| c.t);
        let hi = self.exit.map_or(self.t_max(), |c| c.t);
        (lo, hi)
    }

    pub fn t_min(&self) -> f64 {
        self.samples[0].t
    }

    pub fn t_max(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    fn nearest_index(&self, t: f64) -> usize {
        let i = ((t - self.t_min()) / self.step).round();
        (i.max(0.0) as usize).min(self.samples.len() - 1)
    }

    /// State at one time, refined from the nearest grid sample.
    pub fn state_at(&self, t: f64) -> Sample {
        let s = self.samples[self.nearest_index(t)];
        let f = rhs_vec(&self.chart);
        let y = rk4_to(&f, s.t, &[s.x[0], s.x[1], s.xi[0], s.xi[1]], t, FINE_STEP);
        Sample { t, x: [y[0], y[1]], xi: [y[2], y[3]] }
    }

    /// States at many times from one continuous march out of `t = 0`, so the
    /// result is a smooth function of `t`.
    pub fn states_at(&self, times: &[f64]) -> Vec<Sample> {
        let f = rhs_vec(&self.chart);
        let y0 = [self.start.x[0], self.start.x[1], self.start.xi[0], self.start.xi[1]];
        rk4_at_times(&f, 0.0, &y0, times, FINE_STEP)
            .into_iter()
            .zip(times)
            .map(|(y, &t)| Sample { t, x: [y[0], y[1]], xi: [y[2], y[3]] })
            .collect()
    }

    /// Velocity `ẋ = Gξ`.
    pub fn velocity(&self, s: &Sample) -> [f64; 2] {
        hamilton_rhs(&self.chart, &s.x, &s.xi).0
    }

    pub fn length(&self) -> Option<f64> {
        Some(self.t1()? + self.t2()?)
    }

    /// Largest deviation of `|ξ|_g` from one over the samples.
    pub fn energy_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (cometric_norm(&self.chart, &s.x, &s.xi) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn nontangential(path: &GeodesicPath) -> bool {
    path.status == PathStatus::Nontangential
}

/// Newton refinement of `x1(t) = x2(s)` from a starting guess.
fn refine_pair(p: &GeodesicPath, q: &GeodesicPath, t0: f64, s0: f64) -> Option<(f64, f64, f64, [f64; 2])> {
    let chart = &p.chart;
    let (mut t, mut s) = (t0, s0);
    for _ in 0..30 {
        let a = p.state_at(t);
        let b = q.state_at(s);
        let d = chart.delta(&a.x, &b.x);
        let va = p.velocity(&a);
        let vb = q.velocity(&b);
        // Solve [va, −vb] (dt, ds) = −d.
        let det = va[0] * (-vb[1]) - (-vb[0]) * va[1];
        if det.abs() < 1e-10 {
            return None;
        }
        let dt = (-d[0] * (-vb[1]) - (-vb[0]) * (-d[1])) / det;
        let ds = (va[0] * (-d[1]) - va[1] * (-d[0])) / det;
        t += dt;
        s += ds;
        if dt.abs().max(ds.abs()) < 1e-13 {
            break;
        }
        if (dt.abs() + ds.abs()) > 10.0 * p.step.max(q.step) + 1.0 {
            return None;
        }
    }
    let a = p.state_at(t);
    let b = q.state_at(s);
    let dist = chart.chart_distance(&a.x, &b.x);
    Some((t, s, dist, chart.wrap(&a.x)))
}

/// Points where `p(t)` meets `q(s)` with `t ∈ tr`, `s ∈ sr`. When `same` is
/// set only pairs `t < s` separated by at least `min_sep` are returned.
pub fn path_intersections(
    p: &GeodesicPath,
    tr: (f64, f64),
    q: &GeodesicPath,
    sr: (f64, f64),
    tol: f64,
    same: Option<f64>,
) -> Vec<Intersection> {
    let chart = &p.chart;
    let speed = p
        .samples
        .iter()
        .chain(q.samples.iter())
        .map(|s| {
            let v = p.velocity(s);
            v[0].hypot(v[1])
        })
        .fold(0.0, f64::max);
    let cell = 1.5 * p.step.max(q.step) * speed.max(1e-12) + tol;
    let key = |x: &[f64; 2]| {
        let w = chart.wrap(x);
        ((w[0] / cell).floor() as i64, (w[1] / cell).floor() as i64)
    };
    let period_cells: [Option<i64>; 2] = [0, 1].map(|k| {
        chart.periodic[k].then(|| ((chart.hi[k] - chart.lo[k]) / cell).floor() as i64)
    });
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, s) in q.samples.iter().enumerate() {
        if s.t >= sr.0 - q.step && s.t <= sr.1 + q.step {
            grid.entry(key(&s.x)).or_default().push(j);
        }
    }
    let mut raw = Vec::new();
    for (i, a) in p.samples.iter().enumerate() {
        if a.t < tr.0 - p.step || a.t > tr.1 + p.step {
            continue;
        }
        let (kx, ky) = key(&a.x);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let mut cx = kx + dx;
                let mut cy = ky + dy;
                if let Some(pc) = period_cells[0] {
                    cx = cx.rem_euclid(pc + 1);
                }
                if let Some(pc) = period_cells[1] {
                    cy = cy.rem_euclid(pc + 1);
                }
                if let Some(list) = grid.get(&(cx, cy)) {
                    for &j in list {
                        let b = &q.samples[j];
                        if let Some(sep) = same {
                            if b.t - a.t < sep {
                                continue;
                            }
                        }
                        let d = chart.chart_distance(&a.x, &b.x);
                        if d > cell {
                            continue;
                        }
                        // Keep only discrete local minima of the distance.
                        let near = |ii: usize, jj: usize| {
                            chart.chart_distance(&p.samples[ii].x, &q.samples[jj].x)
                        };
                        let mut is_min = true;
                        if i > 0 && near(i - 1, j) < d {
                            is_min = false;
                        }
                        if i + 1 < p.samples.len() && near(i + 1, j) < d {
                            is_min = false;
                        }
                        if j > 0 && near(i, j - 1) < d {
                            is_min = false;
                        }
                        if j + 1 < q.samples.len() && near(i, j + 1) < d {
                            is_min = false;
                        }
                        if !is_min {
                            continue;
                        }
                        // Retraced arcs (parallel velocities) are not transversal crossings.
                        let va = p.velocity(a);
                        let vb = q.velocity(b);
                        let cross = (va[0] * vb[1] - va[1] * vb[0]).abs();
                        if cross < 1e-3 * va[0].hypot(va[1]) * vb[0].hypot(vb[1]) {
                            continue;
                        }
                        raw.push((i, j));
                    }
                }
            }
        }
    }
    let mut found: Vec<Intersection> = Vec::new();
    for (i, j) in raw {
        let (t0, s0) = (p.samples[i].t, q.samples[j].t);
        let Some((t, s, dist, point)) = refine_pair(p, q, t0, s0) else { continue };
        if dist > tol || t < tr.0 || t > tr.1 || s < sr.0 || s > sr.1 {
            continue;
        }
        if let Some(sep) = same {
            if s - t < sep {
                continue;
            }
        }
        if found.iter().any(|f| (f.t - t).abs() < 1e-6 && (f.s - s).abs() < 1e-6) {
            continue;
        }
        found.push(Intersection { t, s, point });
    }
    found.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.s.total_cmp(&b.s)));
    found
}

/// Transversal self-intersections within the in-domain range.
pub fn self_intersections(path: &GeodesicPath, tol: f64) -> Vec<Intersection> {
    let r = path.interior_range();
    path_intersections(path, r, path, r, tol, Some(10.0 * path.step))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct XrayResult {
    pub value: f64,
    pub error_estimate: f64,
}

/// `∫ f(γ(t)) dt` over `[−T1, T2]`, with panels on the sample grid. The
/// error estimate is the gap between three- and five-point rules.
pub fn xray(path: &GeodesicPath, f: impl Fn(&[f64; 2]) -> f64) -> Result<XrayResult> {
    if path.status == PathStatus::Trapped {
        return Err(Error::Domain("X-ray transform of a trapped geodesic".into()));
    }
    let (a, b) = path.interior_range();
    let mut edges = vec![a];
    let first = (a / path.step).floor() as i64 + 1;
    let last = (b / path.step).ceil() as i64 - 1;
    for k in first..=last {
        let e = k as f64 * path.step;
        if e > a + 1e-14 && e < b - 1e-14 {
            edges.push(e);
        }
    }
    edges.push(b);
    let (r5, r3) = (gl_rule(5), gl_rule(3));
    let mut times = Vec::new();
    for w in edges.windows(2) {
        for &(x, _) in r5.iter().chain(r3.iter()) {
            times.push(0.5 * (w[0] + w[1]) + 0.5 * (w[1] - w[0]) * x);
        }
    }
    let states = path.states_at(&times);
    let (mut v5, mut v3) = (0.0, 0.0);
    let mut k = 0;
    for w in edges.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        for &(_, wt) in &r5 {
            v5 += half * wt * f(&path.chart.wrap(&states[k].x));
            k += 1;
        }
        for &(_, wt) in &r3 {
            v3 += half * wt * f(&path.chart.wrap(&states[k].x));
            k += 1;
        }
    }
    Ok(XrayResult { value: v5, error_estimate: (v5 - v3).abs() })
}

//! Analytic surfaces on a single coordinate chart.
//!
//! Every built-in metric is written once as a closed form generic over
//! [`Scalar`], so values, exact jets and power-series compositions all come
//! from the same code path.
//!
//! Chart conventions: `x1` is the first coordinate and is a `2π`-periodic
//! angle when the axis is flagged periodic; the boundary consists of the two
//! faces of every non-periodic axis.

use crate::error::{invalid, Error, Result};
use crate::taylor::{Scalar, Taylor};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Meridian profile of a surface of revolution, parametrized by arclength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `r(s) = sqrt(c² + (s − s0)²)`, the catenoid meridian in arclength form.
    Catenoid { c: f64, s0: f64, length: f64 },
    /// `r(s) = r0 + amp·sin(freq·s)`.
    Wavy { r0: f64, amp: f64, freq: f64, length: f64 },
}

impl Profile {
    /// Parses `catenoid:c,s0[,length]` or `wavy:r0,amp,freq[,length]`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Validation(format!("profile `{s}` lacks `kind:` prefix")))?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Validation(format!("profile `{s}`: {e}")))?;
        match (kind.trim(), nums.as_slice()) {
            ("catenoid", [c, s0]) => Ok(Profile::Catenoid { c: *c, s0: *s0, length: 1.0 }),
            ("catenoid", [c, s0, l]) => Ok(Profile::Catenoid { c: *c, s0: *s0, length: *l }),
            ("wavy", [r0, amp, freq]) => {
                Ok(Profile::Wavy { r0: *r0, amp: *amp, freq: *freq, length: 1.0 })
            }
            ("wavy", [r0, amp, freq, l]) => {
                Ok(Profile::Wavy { r0: *r0, amp: *amp, freq: *freq, length: *l })
            }
            _ => invalid(format!("unrecognised profile `{s}`")),
        }
    }

    fn length(&self) -> f64 {
        match self {
            Profile::Catenoid { length, .. } | Profile::Wavy { length, .. } => *length,
        }
    }

    fn r<S: Scalar>(&self, s: &S) -> S {
        match self {
            Profile::Catenoid { c, s0, .. } => {
                let d = s.add_f64(-s0);
                (d.square().add_f64(c * c)).sqrt()
            }
            Profile::Wavy { r0, amp, freq, .. } => s.scale(*freq).sin().scale(*amp).add_f64(*r0),
        }
    }

    fn r_second<S: Scalar>(&self, s: &S) -> S {
        match self {
            Profile::Catenoid { c, .. } => {
                // r'' = c² / r³
                let r = self.r(s);
                (r.clone() * r.clone() * r).recip().scale(c * c)
            }
            Profile::Wavy { amp, freq, .. } => s.scale(*freq).sin().scale(-amp * freq * freq),
        }
    }
}

/// Gaussian bump `exp(−|x − center|² / width²)` used by the conformal perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub width: f64,
}

impl Bump {
    /// Parses `cx,cy,width`.
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Validation(format!("bump `{s}`: {e}")))?;
        match v.as_slice() {
            [cx, cy, w] => Ok(Bump { center: [*cx, *cy], width: *w }),
            _ => invalid(format!("bump `{s}` must be `cx,cy,width`")),
        }
    }
}

impl Default for Bump {
    fn default() -> Self {
        Bump { center: [0.5, 0.5], width: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SurfaceSpec {
    /// `S¹ × [0, a]` with the flat metric.
    FlatCylinder { a: f64 },
    /// Sphere in longitude/colatitude `(φ, θ)` with polar caps of angular radius `cap` removed.
    SpherePatch { cap: f64 },
    /// `S¹ × [0, L]` with metric `ds² + r(s)² dθ²`.
    SurfaceOfRevolution { profile: Profile },
    /// Unit square with metric `e^{2σ}(dx² + dy²)`, `σ = amplitude · bump`.
    PerturbedFlat { amplitude: f64, bump: Bump },
}

/// Analytic cometric on a rectangle with optional periodic first axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricChart {
    pub spec: SurfaceSpec,
    pub dim: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub periodic: [bool; 2],
    pub margin: f64,
    pub jet_order: usize,
}

/// `G` and its partial derivatives up to a fixed order at one point.
#[derive(Clone, Debug)]
pub struct CometricJet {
    entries: [Taylor<f64>; 3],
    pub order: usize,
}

impl CometricJet {
    /// `∂x1^i ∂x2^j G` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> Matrix2<f64> {
        assert!(i + j <= self.order, "requested derivative beyond jet order");
        let [a, b, c] = &self.entries;
        let (a, b, c) = (a.partial(i, j), b.partial(i, j), c.partial(i, j));
        Matrix2::new(a, b, b, c)
    }
}

/// Christoffel symbols `gamma[i][j][k] = Γ^i_{jk}`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

pub fn build_surface(spec: SurfaceSpec, jet_order: usize, margin: Option<f64>) -> Result<MetricChart> {
    if jet_order < 2 {
        return invalid("jet_order must be at least 2");
    }
    let (lo, hi, periodic) = match &spec {
        SurfaceSpec::FlatCylinder { a } => {
            if !(a.is_finite() && *a > 0.0) {
                return invalid(format!("flat_cylinder requires a > 0, got {a}"));
            }
            ([0.0, 0.0], [2.0 * PI, *a], [true, false])
        }
        SurfaceSpec::SpherePatch { cap } => {
            if !(cap.is_finite() && *cap > 0.0 && *cap < PI / 2.0 - 0.05) {
                return invalid(format!("sphere_patch requires 0 < cap < π/2 − 0.05, got {cap}"));
            }
            ([0.0, *cap], [2.0 * PI, PI - cap], [true, false])
        }
        SurfaceSpec::SurfaceOfRevolution { profile } => {
            let l = profile.length();
            if !(l.is_finite() && l > 0.0) {
                return invalid("profile length must be positive");
            }
            match profile {
                Profile::Catenoid { c, .. } if !(*c > 0.0) => {
                    return invalid("catenoid waist c must be positive")
                }
                Profile::Wavy { r0, amp, .. } if !(*r0 - amp.abs() > 0.0) => {
                    return invalid("wavy profile must keep r0 − |amp| > 0 so that r stays positive")
                }
                _ => {}
            }
            ([0.0, 0.0], [2.0 * PI, l], [true, false])
        }
        SurfaceSpec::PerturbedFlat { amplitude, bump } => {
            if !(amplitude.is_finite() && amplitude.abs() <= 1.0) {
                return invalid(format!(
                    "perturbed_flat amplitude must satisfy |amplitude| ≤ 1, got {amplitude}"
                ));
            }
            if !(bump.width > 0.0) {
                return invalid("bump width must be positive");
            }
            ([0.0, 0.0], [1.0, 1.0], [false, false])
        }
    };
    let shortest = (0..2)
        .filter(|&k| !periodic[k])
        .map(|k| hi[k] - lo[k])
        .fold(f64::INFINITY, f64::min);
    let margin = margin.unwrap_or(0.1 * shortest);
    if !(margin.is_finite() && margin > 0.0) {
        return invalid(format!("margin must be positive, got {margin}"));
    }
    if let SurfaceSpec::SpherePatch { cap } = &spec {
        if margin >= *cap {
            return invalid("sphere_patch margin must be smaller than the cap radius");
        }
    }
    let chart = MetricChart { spec, dim: 2, lo, hi, periodic, margin, jet_order };
    chart.check_positive()?;
    Ok(chart)
}

impl MetricChart {
    fn check_positive(&self) -> Result<()> {
        let n = 24;
        for i in 0..=n {
            for j in 0..=n {
                let x = [
                    self.lo[0] - self.margin + (self.hi[0] - self.lo[0] + 2.0 * self.margin) * i as f64 / n as f64,
                    self.lo[1] - self.margin + (self.hi[1] - self.lo[1] + 2.0 * self.margin) * j as f64 / n as f64,
                ];
                let g = self.cometric_unchecked(&x);
                let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
                if !(g[(0, 0)] > 0.0 && det > 0.0 && det.is_finite()) {
                    return invalid(format!("cometric not positive-definite at {x:?}"));
                }
            }
        }
        Ok(())
    }

    /// Closed-form cometric entries `(G11, G12, G22)`.
    pub fn cometric_generic<S: Scalar>(&self, x: &[S; 2]) -> [S; 3] {
        let one = x[0].lift(1.0);
        let zero = x[0].lift(0.0);
        match &self.spec {
            SurfaceSpec::FlatCylinder { .. } => [one.clone(), zero, one],
            SurfaceSpec::SpherePatch { .. } => {
                let s = x[1].sin();
                [s.square().recip(), zero, one]
            }
            SurfaceSpec::SurfaceOfRevolution { profile } => {
                let r = profile.r(&x[1]);
                [r.square().recip(), zero, one]
            }
            SurfaceSpec::PerturbedFlat { .. } => {
                let e = self.sigma(x).scale(-2.0).exp();
                [e.clone(), zero, e]
            }
        }
    }

    fn sigma<S: Scalar>(&self, x: &[S; 2]) -> S {
        match &self.spec {
            SurfaceSpec::PerturbedFlat { amplitude, bump } => {
                let dx = x[0].add_f64(-bump.center[0]);
                let dy = x[1].add_f64(-bump.center[1]);
                let q = (dx.square() + dy.square()).scale(-1.0 / (bump.width * bump.width));
                q.exp().scale(*amplitude)
            }
            _ => x[0].lift(0.0),
        }
    }

    /// Gaussian curvature as a closed form.
    pub fn curvature_generic<S: Scalar>(&self, x: &[S; 2]) -> S {
        match &self.spec {
            SurfaceSpec::FlatCylinder { .. } => x[0].lift(0.0),
            SurfaceSpec::SpherePatch { .. } => x[0].lift(1.0),
            SurfaceSpec::SurfaceOfRevolution { profile } => {
                -(profile.r_second(&x[1]) / profile.r(&x[1]))
            }
            SurfaceSpec::PerturbedFlat { bump, .. } => {
                // Δσ = σ (4|x−c|²/w⁴ − 4/w²) for a Gaussian bump in two variables.
                let w2 = bump.width * bump.width;
                let dx = x[0].add_f64(-bump.center[0]);
                let dy = x[1].add_f64(-bump.center[1]);
                let sigma = self.sigma(x);
                let lap = sigma.clone()
                    * (dx.square() + dy.square()).scale(4.0 / (w2 * w2)).add_f64(-4.0 / w2);
                -(sigma.scale(-2.0).exp() * lap)
            }
        }
    }

    pub fn curvature(&self, x: &[f64; 2]) -> f64 {
        self.curvature_generic(x)
    }

    /// True when `x` lies in the ε-extended chart.
    pub fn in_extended(&self, x: &[f64; 2]) -> bool {
        (0..2).all(|k| {
            self.periodic[k]
                || (x[k] >= self.lo[k] - self.margin - 1e-12 && x[k] <= self.hi[k] + self.margin + 1e-12)
        }) && x.iter().all(|v| v.is_finite())
    }

    /// True when `x` lies in the closed domain.
    pub fn in_domain(&self, x: &[f64; 2]) -> bool {
        (0..2).all(|k| self.periodic[k] || (x[k] >= self.lo[k] && x[k] <= self.hi[k]))
    }

    pub fn check_point(&self, x: &[f64; 2]) -> Result<()> {
        if self.in_extended(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("point {x:?} outside the extended chart")))
        }
    }

    /// Reduces periodic coordinates into `[lo, hi)`.
    pub fn wrap(&self, x: &[f64; 2]) -> [f64; 2] {
        let mut out = *x;
        for k in 0..2 {
            if self.periodic[k] {
                let p = self.hi[k] - self.lo[k];
                out[k] = self.lo[k] + (x[k] - self.lo[k]).rem_euclid(p);
            }
        }
        out
    }

    /// Coordinate difference `a − b` with periodic axes reduced to `(−p/2, p/2]`.
    pub fn delta(&self, a: &[f64; 2], b: &[f64; 2]) -> [f64; 2] {
        let mut d = [a[0] - b[0], a[1] - b[1]];
        for k in 0..2 {
            if self.periodic[k] {
                let p = self.hi[k] - self.lo[k];
                d[k] -= p * (d[k] / p).round();
            }
        }
        d
    }

    pub fn chart_distance(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        let d = self.delta(a, b);
        d[0].hypot(d[1])
    }

    fn cometric_unchecked(&self, x: &[f64; 2]) -> Matrix2<f64> {
        let [a, b, c] = self.cometric_generic(x);
        Matrix2::new(a, b, b, c)
    }

    pub fn cometric(&self, x: &[f64; 2]) -> Result<Matrix2<f64>> {
        self.check_point(x)?;
        Ok(self.cometric_unchecked(x))
    }

    /// `G` and its first partials, used on hot paths where the domain is
    /// already known to be valid.
    pub fn cometric_grad(&self, x: &[f64; 2]) -> (Matrix2<f64>, [Matrix2<f64>; 2]) {
        let tx = [Taylor::variable(x[0], 0, 2, 1), Taylor::variable(x[1], 1, 2, 1)];
        let [a, b, c] = self.cometric_generic(&tx);
        let m = |i: usize, j: usize| {
            Matrix2::new(*a.coeff(i, j), *b.coeff(i, j), *b.coeff(i, j), *c.coeff(i, j))
        };
        (m(0, 0), [m(1, 0), m(0, 1)])
    }

    pub fn cometric_jet(&self, x: &[f64; 2], order: usize) -> Result<CometricJet> {
        self.check_point(x)?;
        if order > self.jet_order {
            return invalid(format!(
                "jet order {order} exceeds configured maximum {}",
                self.jet_order
            ));
        }
        let tx = [Taylor::variable(x[0], 0, 2, order), Taylor::variable(x[1], 1, 2, order)];
        Ok(CometricJet { entries: self.cometric_generic(&tx), order })
    }

    /// Metric tensor `g = G⁻¹`.
    pub fn metric(&self, x: &[f64; 2]) -> Result<Matrix2<f64>> {
        self.cometric(x)?
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular cometric".into()))
    }

    /// Riemannian area density `sqrt(det g)`.
    pub fn area_density(&self, x: &[f64; 2]) -> f64 {
        let g = self.cometric_unchecked(x);
        1.0 / g.determinant().sqrt()
    }

    pub fn christoffel(&self, x: &[f64; 2]) -> Result<Christoffel> {
        self.check_point(x)?;
        let (gc, dgc) = self.cometric_grad(x);
        let g = gc.try_inverse().ok_or_else(|| Error::Numerical("singular cometric".into()))?;
        // ∂_l g = −g (∂_l G) g
        let dg = [-(g * dgc[0] * g), -(g * dgc[1] * g)];
        let mut out = [[[0.0; 2]; 2]; 2];
        for (i, oi) in out.iter_mut().enumerate() {
            for j in 0..2 {
                for k in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += gc[(i, l)] * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]);
                    }
                    oi[j][k] = 0.5 * s;
                }
            }
        }
        Ok(out)
    }

    /// Length of the shortest non-periodic side, used for default scales.
    pub fn shortest_side(&self) -> f64 {
        (0..2)
            .filter(|&k| !self.periodic[k])
            .map(|k| self.hi[k] - self.lo[k])
            .fold(f64::INFINITY, f64::min)
    }

    /// Default random interior sample for invariant checks.
    pub fn interior_point(&self, u: f64, v: f64) -> [f64; 2] {
        [
            self.lo[0] + u * (self.hi[0] - self.lo[0]),
            self.lo[1] + v * (self.hi[1] - self.lo[1]),
        ]
    }
}

//! FBI transform `Tu(α; h) = ∫ e^{iφ(x,α)/h} a χ(x) conj(u(x)) dx` in one or
//! two dimensions, decay fits in `h`, and phase-space classification.
//!
//! A point `α` counts as analytic when `|Tu(α; h)|` fits `e^{c0 − c1/h}`
//! clearly better than `e^{c0} h^p`. A finite `h` grid can only show
//! consistency with either behaviour, never prove it.

use crate::error::{invalid, Error, Result};
use crate::fit::{fit_decay, DecayFit};
use crate::quad::composite;
use crate::quasimode::smoothstep;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type C = Complex64;

/// Phase-space point `(α_x, α_ξ)` with Euclidean `|α_ξ| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<const D: usize> {
    #[serde(with = "serde_arrays")]
    pub x: [f64; D],
    #[serde(with = "serde_arrays")]
    pub xi: [f64; D],
}

mod serde_arrays {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(v: &[f64; D], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<[f64; D], De::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into().map_err(|_| serde::de::Error::custom(format!("expected {D} components")))
    }
}

impl<const D: usize> PhasePoint<D> {
    pub fn new(x: [f64; D], xi: [f64; D]) -> Result<Self> {
        let n = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-9 || x.iter().any(|v| !v.is_finite()) {
            return invalid(format!("phase-space point needs finite x and |xi| = 1, got |xi| = {n}"));
        }
        Ok(Self { x, xi })
    }
}

/// Phase function supplied by the caller, `φ(x, α)`.
pub type PhaseFn<const D: usize> = Arc<dyn Fn(&[f64; D], &PhasePoint<D>) -> C + Send + Sync>;

#[derive(Clone)]
pub enum FbiPhase<const D: usize> {
    /// `α_ξ·(x − α_x) + (i/2)|x − α_x|²`.
    Standard,
    /// A phase with `φ = f(α)` real and `φ'_x = t0 α_ξ` at `x = α_x`. It is
    /// normalized to `(φ − f(α))/t0` and evaluated at `h/t0`.
    Supplied { phi: PhaseFn<D>, t0: f64, f_alpha: f64 },
}

impl<const D: usize> fmt::Debug for FbiPhase<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Standard => write!(f, "Standard"),
            Self::Supplied { t0, f_alpha, .. } => write!(f, "Supplied {{ t0: {t0}, f_alpha: {f_alpha} }}"),
        }
    }
}

/// Radial cutoff around `α_x`: one up to `plateau`, zero from `radius` on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub radius: f64,
    pub plateau: f64,
}

impl Default for Cutoff {
    fn default() -> Self {
        Self { radius: 3.0, plateau: 2.0 }
    }
}

impl Cutoff {
    pub fn value(&self, r: f64) -> f64 {
        1.0 - smoothstep((r - self.plateau) / (self.radius - self.plateau))[0]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { radius: self.radius * k, plateau: self.plateau * k }
    }
}

#[derive(Clone, Debug)]
pub struct FbiQuery<const D: usize> {
    pub alpha: PhasePoint<D>,
    pub phase: FbiPhase<D>,
    pub cutoff: Cutoff,
    pub amplitude: C,
    /// Upper bound on the local frequency of `u`, added to `|α_ξ|` when
    /// sizing the quadrature.
    pub u_frequency: f64,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Requested node spacing; defaults to the largest admissible one.
    pub spacing: Option<f64>,
}

impl<const D: usize> FbiQuery<D> {
    pub fn standard(alpha: PhasePoint<D>, cutoff: Cutoff) -> Self {
        Self {
            alpha,
            phase: FbiPhase::Standard,
            cutoff,
            amplitude: C::new(1.0, 0.0),
            u_frequency: 0.0,
            order: 8,
            spacing: None,
        }
    }

    pub fn at(&self, alpha: PhasePoint<D>) -> Self {
        Self { alpha, ..self.clone() }
    }
}

/// A function that can be fed to the transform.
pub trait Field<const D: usize>: Sync {
    fn value(&self, x: &[f64; D]) -> C;

    /// Box on which the function is defined, if bounded.
    fn domain(&self) -> Option<([f64; D], [f64; D])> {
        None
    }
}

impl<F: Fn(&[f64; D]) -> C + Sync, const D: usize> Field<D> for F {
    fn value(&self, x: &[f64; D]) -> C {
        self(x)
    }
}

/// Samples on a regular 2D grid, read back by local tensor Lagrange
/// interpolation of degree `degree`.
#[derive(Clone, Debug)]
pub struct SampledField {
    pub lo: [f64; 2],
    pub step: [f64; 2],
    pub shape: [usize; 2],
    /// Row-major, first index along the first axis.
    pub values: Vec<C>,
    pub degree: usize,
}

impl SampledField {
    /// Wraps values already laid out on the lattice `lo + (i, j)·step`.
    pub fn new(lo: [f64; 2], step: [f64; 2], shape: [usize; 2], values: Vec<C>, degree: usize) -> Result<Self> {
        if shape[0] < degree + 1 || shape[1] < degree + 1 {
            return invalid(format!("need at least {} samples per axis", degree + 1));
        }
        if !(step[0] > 0.0 && step[1] > 0.0) {
            return invalid("sample steps must be positive");
        }
        if values.len() != shape[0] * shape[1] {
            return invalid("sample count does not match the grid shape");
        }
        Ok(Self { lo, step, shape, values, degree })
    }

    /// Builds the grid from scattered `(x, y, value)` rows that must fill a
    /// complete regular lattice.
    pub fn from_rows(rows: &[([f64; 2], C)], degree: usize) -> Result<Self> {
        let axis = |k: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
            v
        };
        let (ax, ay) = (axis(0), axis(1));
        if ax.len() < degree + 1 || ay.len() < degree + 1 {
            return invalid(format!("need at least {} distinct samples per axis", degree + 1));
        }
        if ax.len() * ay.len() != rows.len() {
            return invalid("samples do not form a complete regular grid");
        }
        let step = [(ax[ax.len() - 1] - ax[0]) / (ax.len() - 1) as f64, (ay[ay.len() - 1] - ay[0]) / (ay.len() - 1) as f64];
        for (k, a) in [&ax, &ay].into_iter().enumerate() {
            if a.windows(2).any(|w| ((w[1] - w[0]) / step[k] - 1.0).abs() > 1e-6) {
                return invalid("sample grid is not uniformly spaced");
            }
        }
        let shape = [ax.len(), ay.len()];
        let mut values = vec![C::new(f64::NAN, 0.0); shape[0] * shape[1]];
        for (x, v) in rows {
            let i = ((x[0] - ax[0]) / step[0]).round() as usize;
            let j = ((x[1] - ay[0]) / step[1]).round() as usize;
            values[i * shape[1] + j] = *v;
        }
        Ok(Self { lo: [ax[0], ay[0]], step, shape, values, degree })
    }

    fn stencil(&self, k: usize, x: f64) -> (usize, Vec<f64>) {
        let n = self.degree + 1;
        let s = (x - self.lo[k]) / self.step[k];
        let start = (s - 0.5 * self.degree as f64).round().clamp(0.0, (self.shape[k] - n) as f64) as usize;
        let w = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| b != a)
                    .map(|b| (s - (start + b) as f64) / (a as f64 - b as f64))
                    .product()
            })
            .collect();
        (start, w)
    }
}

impl Field<2> for SampledField {
    fn value(&self, x: &[f64; 2]) -> C {
        let (i0, wx) = self.stencil(0, x[0]);
        let (j0, wy) = self.stencil(1, x[1]);
        let mut acc = C::new(0.0, 0.0);
        for (a, wa) in wx.iter().enumerate() {
            for (b, wb) in wy.iter().enumerate() {
                acc += self.values[(i0 + a) * self.shape[1] + j0 + b] * (wa * wb);
            }
        }
        acc
    }

    fn domain(&self) -> Option<([f64; 2], [f64; 2])> {
        let hi = [
            self.lo[0] + self.step[0] * (self.shape[0] - 1) as f64,
            self.lo[1] + self.step[1] * (self.shape[1] - 1) as f64,
        ];
        Some((self.lo, hi))
    }
}

/// Largest admissible node spacing at semiclassical parameter `h`.
pub fn required_spacing(h: f64, frequency: f64) -> f64 {
    (0.2 * std::f64::consts::PI * h / frequency.max(1e-300)).min(h.sqrt() / 4.0)
}

/// Evaluates the transform at one `h`.
pub fn transform<const D: usize>(u: &impl Field<D>, q: &FbiQuery<D>, h: f64) -> Result<C> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("h must be positive, got {h}"));
    }
    let Cutoff { radius, plateau } = q.cutoff;
    if !(plateau > 0.0 && radius > plateau) {
        return invalid(format!("cutoff needs 0 < plateau < radius, got {plateau} and {radius}"));
    }
    if q.order < 2 {
        return invalid("quadrature order must be at least 2");
    }
    let alpha = q.alpha;
    let (h_eff, norm): (f64, Option<(&PhaseFn<D>, f64, f64)>) = match &q.phase {
        FbiPhase::Standard => (h, None),
        FbiPhase::Supplied { phi, t0, f_alpha } => {
            if !(*t0 > 0.0 && t0.is_finite()) {
                return invalid(format!("supplied phase needs t0 > 0, got {t0}"));
            }
            (h / t0, Some((phi, *t0, *f_alpha)))
        }
    };
    let freq = alpha.xi.iter().map(|v| v * v).sum::<f64>().sqrt() + q.u_frequency;
    let need = required_spacing(h_eff, freq);
    let spacing = q.spacing.unwrap_or(need);
    if spacing > need * (1.0 + 1e-12) {
        return invalid(format!(
            "FBI quadrature under-resolved at h = {h}: node spacing {spacing:.3e} exceeds the required {need:.3e}"
        ));
    }
    if let Some((lo, hi)) = u.domain() {
        for k in 0..D {
            if alpha.x[k] - radius < lo[k] - 1e-12 || alpha.x[k] + radius > hi[k] + 1e-12 {
                return Err(Error::Domain(format!(
                    "cutoff of radius {radius} around alpha_x leaves the sampled domain along axis {k}"
                )));
            }
        }
    }
    // Gauss–Legendre gaps reach about π/2 times the mean gap near the panel centre.
    let width = spacing * q.order as f64 * 2.0 / std::f64::consts::PI;
    let axes: Vec<Vec<(f64, f64)>> = (0..D)
        .map(|k| composite(alpha.x[k] - radius, alpha.x[k] + radius, width, q.order))
        .collect();
    let inner: usize = axes[1..].iter().map(|a| a.len()).product();
    let ih = C::new(0.0, 1.0 / h_eff);
    let rows: Vec<C> = axes[0]
        .par_iter()
        .map(|&(x0, w0)| {
            let mut acc = C::new(0.0, 0.0);
            let mut x = [0.0; D];
            x[0] = x0;
            for flat in 0..inner {
                let mut w = w0;
                let mut rem = flat;
                for k in (1..D).rev() {
                    let (xk, wk) = axes[k][rem % axes[k].len()];
                    rem /= axes[k].len();
                    x[k] = xk;
                    w *= wk;
                }
                let mut r2 = 0.0;
                let mut lin = 0.0;
                for k in 0..D {
                    let d = x[k] - alpha.x[k];
                    r2 += d * d;
                    lin += alpha.xi[k] * d;
                }
                let r = r2.sqrt();
                if r >= radius {
                    continue;
                }
                let phase = match norm {
                    None => C::new(lin, 0.5 * r2),
                    Some((phi, t0, f)) => (phi(&x, &alpha) - f) / t0,
                };
                acc += (ih * phase).exp() * u.value(&x).conj() * (w * q.cutoff.value(r));
            }
            acc
        })
        .collect();
    let total: C = rows.into_iter().fold(C::new(0.0, 0.0), |a, b| a + b) * q.amplitude;
    if !(total.re.is_finite() && total.im.is_finite()) {
        return Err(Error::Numerical(format!("non-finite FBI value at h = {h}")));
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    AnalyticDecay,
    Singular,
    Inconclusive,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AnalyticDecay => "analytic_decay",
            Self::Singular => "singular",
            Self::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Decision rule for [`decay_fit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `c_min = c_min_factor / h_max`.
    pub c_min_factor: f64,
    pub r2_min: f64,
    pub margin: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { c_min_factor: 0.1, r2_min: 0.9, margin: 0.02 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub values: Vec<f64>,
    pub exponential: Option<DecayFit>,
    pub power: Option<DecayFit>,
    pub exact_zero: bool,
    pub class: Classification,
}

/// Fits both decay models to `|Tu|` over `hs` and classifies.
pub fn decay_fit(hs: &[f64], values: &[f64], th: &Thresholds) -> Result<DecayReport> {
    if hs.len() != values.len() {
        return invalid("h grid and values differ in length");
    }
    if hs.len() < 4 {
        return invalid(format!("decay fit needs at least 4 h values, got {}", hs.len()));
    }
    let (lo, hi) = hs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
    if !(lo > 0.0) || hi / lo < 8.0 - 1e-12 {
        return invalid(format!("h grid must be positive and span a factor of at least 8, got {lo}..{hi}"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return invalid("decay values must be finite and non-negative");
    }
    if values.iter().any(|&v| v == 0.0) {
        return Ok(DecayReport {
            values: values.to_vec(),
            exponential: None,
            power: None,
            exact_zero: true,
            class: Classification::AnalyticDecay,
        });
    }
    let (e, p) = fit_decay(hs, values).ok_or_else(|| Error::Numerical("degenerate decay fit".into()))?;
    let class = if e.r2 - p.r2 > th.margin {
        if e.rate >= th.c_min_factor / hi && e.r2 >= th.r2_min {
            Classification::AnalyticDecay
        } else {
            Classification::Inconclusive
        }
    } else if p.r2 - e.r2 > th.margin {
        Classification::Singular
    } else {
        Classification::Inconclusive
    };
    Ok(DecayReport { values: values.to_vec(), exponential: Some(e), power: Some(p), exact_zero: false, class })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WavefrontRow<const D: usize> {
    pub alpha: PhasePoint<D>,
    pub report: DecayReport,
    /// Classification with the doubled cutoff, for the subsampled points.
    pub recheck: Option<Classification>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WavefrontReport<const D: usize> {
    pub hs: Vec<f64>,
    pub rows: Vec<WavefrontRow<D>>,
    pub warnings: Vec<String>,
}

impl<const D: usize> WavefrontReport<D> {
    pub fn classes(&self) -> Vec<Classification> {
        self.rows.iter().map(|r| r.report.class).collect()
    }
}

/// Cutoff multiplier used for the independence recheck.
pub const RECHECK_SCALE: f64 = 2.0;

fn magnitudes<const D: usize>(u: &impl Field<D>, q: &FbiQuery<D>, hs: &[f64]) -> Result<Vec<f64>> {
    hs.par_iter().map(|&h| transform(u, q, h).map(|v| v.norm())).collect()
}

/// The recheck cutoff: enlarged by [`RECHECK_SCALE`] when that still fits
/// inside the domain of `u`, shrunk by the same factor otherwise.
fn recheck_cutoff<const D: usize>(u: &impl Field<D>, q: &FbiQuery<D>) -> Cutoff {
    let big = q.cutoff.scaled(RECHECK_SCALE);
    match u.domain() {
        Some((lo, hi)) if (0..D).any(|k| q.alpha.x[k] - big.radius < lo[k] || q.alpha.x[k] + big.radius > hi[k]) => {
            q.cutoff.scaled(1.0 / RECHECK_SCALE)
        }
        _ => big,
    }
}

/// Classifies every `α` in `alphas`. Every tenth point is repeated with a
/// second cutoff radius (see [`recheck_cutoff`]); a changed verdict demotes
/// it to inconclusive with a warning.
pub fn scan<const D: usize>(
    u: &impl Field<D>,
    alphas: &[PhasePoint<D>],
    hs: &[f64],
    template: &FbiQuery<D>,
    th: &Thresholds,
) -> Result<WavefrontReport<D>> {
    if alphas.is_empty() {
        return invalid("empty phase-space grid");
    }
    let rows: Vec<Result<WavefrontRow<D>>> = alphas
        .par_iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let q = template.at(alpha);
            let report = decay_fit(hs, &magnitudes(u, &q, hs)?, th)?;
            let recheck = if i % 10 == 0 {
                let q2 = FbiQuery { cutoff: recheck_cutoff(u, &q), ..q };
                Some(decay_fit(hs, &magnitudes(u, &q2, hs)?, th)?.class)
            } else {
                None
            };
            Ok(WavefrontRow { alpha, report, recheck })
        })
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    let mut warnings = Vec::new();
    for row in rows {
        let mut row = row?;
        if let Some(c) = row.recheck {
            if c != row.report.class {
                warnings.push(format!(
                    "cutoff dependence at alpha = {:?}: {} vs {} with the rescaled cutoff",
                    row.alpha, row.report.class, c
                ));
                row.report.class = Classification::Inconclusive;
            }
        }
        out.push(row);
    }
    Ok(WavefrontReport { hs: hs.to_vec(), rows: out, warnings })
}

/// `|∫ e^{iα_ξ·(x−α_x)/h − |x−α_x|²/(2h)} e^{−|x|²} dx|` over `ℝ^D`.
pub fn gaussian_oracle<const D: usize>(alpha: &PhasePoint<D>, h: f64) -> f64 {
    let a = 0.5 / h + 1.0;
    let x2: f64 = alpha.x.iter().map(|v| v * v).sum();
    let per = (std::f64::consts::PI / a).ln() * 0.5;
    (D as f64 * per - 1.0 / (2.0 * h * (1.0 + 2.0 * h)) - x2 / (1.0 + 2.0 * h)).exp()
}

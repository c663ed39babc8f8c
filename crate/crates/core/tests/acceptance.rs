//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one verdict line per criterion and exits non-zero when a criterion that
//! is expected to hold fails.
//!
//! `ACCEPTANCE_ONLY=3,7` restricts the run to the listed criteria.

use beamlab_core::admissibility::{build_pair, cylinder_rotation, family, PhaseGrid};
use beamlab_core::beam_amplitude::{hierarchy_check, transport};
use beamlab_core::beam_phase::{hessian_flow, phase_jet, ExactFlatPhase};
use beamlab_core::calderon::{
    beam_pair, center_pair, combined_phase_conditions, hat_grid, scan_with_hats, CalderonReport, ProductExperiment,
    TestField,
};
use beamlab_core::fbi::{
    decay_fit, gaussian_oracle, required_spacing, transform, Classification, Cutoff, FbiQuery, PhasePoint, Thresholds,
};
use beamlab_core::fermi::build_frame;
use beamlab_core::fit::fit_line;
use beamlab_core::geodesic::{nontangential, trace, xray, GeodesicPath, TraceOptions, UnitCovector};
use beamlab_core::manifold::{build_surface, Bump, MetricChart, Profile, SurfaceSpec};
use beamlab_core::quasimode::{build_beam, residual_sweep, BeamKind, BeamParams, NPolicy, QuadSpec};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

/// Criteria known to miss their threshold for a structural reason. They
/// are still run and still reported as FAIL; they just do not abort the
/// suite.
const KNOWN_RED: &[u32] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
    csv: String,
}

impl Outcome {
    fn error(e: impl std::fmt::Display) -> Self {
        Self { pass: false, detail: format!("error: {e}"), csv: String::new() }
    }
}

/// Comma-separated table with 17 significant digits per float.
#[derive(Default)]
struct Csv(String);

impl Csv {
    fn new(header: &str) -> Self {
        Self(format!("{header}\n"))
    }

    fn row(&mut self, cells: &[String]) {
        self.0.push_str(&cells.join(","));
        self.0.push('\n');
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

type Run = fn() -> Outcome;

struct Criterion {
    id: u32,
    name: &'static str,
    run: Run,
    budget: Option<Duration>,
}

fn criteria() -> Vec<Criterion> {
    let secs = |s: u64| Some(Duration::from_secs(s));
    vec![
        Criterion { id: 1, name: "geodesic correctness", run: c1, budget: secs(10) },
        Criterion { id: 2, name: "x-ray kernel", run: c2, budget: None },
        Criterion { id: 3, name: "cylinder admissibility", run: c3, budget: secs(30) },
        Criterion { id: 4, name: "hessian positivity", run: c4, budget: None },
        Criterion { id: 5, name: "eikonal jet order", run: c5, budget: None },
        Criterion { id: 6, name: "transport hierarchy", run: c6, budget: None },
        Criterion { id: 7, name: "residual decay class", run: c7, budget: secs(300) },
        Criterion { id: 8, name: "fbi detector", run: c8, budget: secs(120) },
        Criterion { id: 9, name: "combined phase conditions", run: c9, budget: None },
        Criterion { id: 10, name: "calderon end to end", run: c10, budget: secs(900) },
    ]
}

fn cylinder(a: f64) -> MetricChart {
    build_surface(SurfaceSpec::FlatCylinder { a }, 4, None).expect("flat cylinder")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c1() -> Outcome {
    let chart = cylinder(1.0);
    let mut r = rng(1);
    let opts = TraceOptions { max_length: 20.0, ..TraceOptions::default() };
    let mut csv = Csv::new("id,x1,x2,theta,status,position_err,energy_err");
    let (mut pos, mut energy) = (0.0f64, 0.0f64);
    for id in 0..100 {
        let x0 = [r.gen_range(0.0..2.0 * PI), r.gen_range(0.02..0.98)];
        let th: f64 = r.gen_range(0.0..2.0 * PI);
        let v = [th.cos(), th.sin()];
        let path = match UnitCovector::normalized(&chart, x0, v).and_then(|s| trace(&chart, s, &opts)) {
            Ok(p) => p,
            Err(e) => return Outcome::error(e),
        };
        let err = path
            .samples
            .iter()
            .map(|s| chart.chart_distance(&s.x, &[x0[0] + s.t * v[0], x0[1] + s.t * v[1]]))
            .fold(0.0, f64::max);
        let de = path.energy_defect();
        pos = pos.max(err);
        energy = energy.max(de);
        csv.row(&[id.to_string(), num(x0[0]), num(x0[1]), num(th), format!("{:?}", path.status), num(err), num(de)]);
    }
    Outcome {
        pass: pos <= 1e-8 && energy <= 1e-8,
        detail: format!("max position error {pos:.2e}, max energy drift {energy:.2e} over 100 geodesics"),
        csv: csv.0,
    }
}

fn c2() -> Outcome {
    let a = 1.0;
    let chart = cylinder(a);
    let mut r = rng(2);
    let profiles: Vec<Vec<(f64, f64)>> =
        (0..5).map(|_| (0..4).map(|_| (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect()).collect();
    let h = |p: &[(f64, f64)], s: f64| -> f64 {
        p.iter()
            .enumerate()
            .map(|(k, (c, d))| {
                let w = 2.0 * PI * (k + 1) as f64 * s / a;
                c * w.cos() + d * w.sin()
            })
            .sum()
    };
    let mut csv = Csv::new("geodesic,profile,x1,x2,xi1,xi2,value,error_estimate");
    let (mut worst, mut found, mut tries) = (0.0f64, 0usize, 0usize);
    while found < 50 {
        tries += 1;
        if tries > 1000 {
            return Outcome::error("could not draw 50 nontangential geodesics");
        }
        let x0 = [r.gen_range(0.0..2.0 * PI), r.gen_range(0.05..0.95)];
        let th: f64 = r.gen_range(0.0..2.0 * PI);
        let Ok(path) = UnitCovector::normalized(&chart, x0, [th.cos(), th.sin()]).and_then(|s| trace(&chart, s, &TraceOptions::default()))
        else {
            continue;
        };
        if !nontangential(&path) {
            continue;
        }
        for (j, p) in profiles.iter().enumerate() {
            let res = match xray(&path, |x| h(p, x[1])) {
                Ok(v) => v,
                Err(e) => return Outcome::error(e),
            };
            worst = worst.max(res.value.abs());
            csv.row(&[
                found.to_string(),
                j.to_string(),
                num(x0[0]),
                num(x0[1]),
                num(path.start.xi[0]),
                num(path.start.xi[1]),
                num(res.value),
                num(res.error_estimate),
            ]);
        }
        found += 1;
    }
    Outcome { pass: worst <= 1e-8, detail: format!("max |xray| {worst:.2e} over 50 geodesics x 5 profiles"), csv: csv.0 }
}

fn c3() -> Outcome {
    let chart = cylinder(1.0);
    let mut r = rng(3);
    let mut csv = Csv::new("id,x1,x2,xi1,xi2,alpha,t0,constraint,passed");
    let mut failures = Vec::new();
    for id in 0..100 {
        let x0 = [r.gen_range(0.0..2.0 * PI), r.gen_range(0.0..1.0)];
        let th: f64 = r.gen_range(0.0..2.0 * PI);
        let xi0 = [th.cos(), th.sin()];
        let rot = match cylinder_rotation(xi0, 1.0) {
            Ok(v) => v,
            Err(e) => {
                failures.push(format!("#{id}: {e}"));
                continue;
            }
        };
        let ok = match build_pair(&chart, x0, rot.xi1, rot.xi2, &TraceOptions::default(), 1e-6) {
            Ok(p) => {
                let t0_ok = (p.t0 - 2.0 * rot.alpha.cos()).abs() < 1e-9 && p.t0 > 0.0 && p.t0 < 2.0;
                p.report.passed && t0_ok && rot.constraint < 2.0 * PI
            }
            Err(_) => false,
        };
        if !ok {
            failures.push(format!("#{id}"));
        }
        csv.row(&[
            id.to_string(),
            num(x0[0]),
            num(x0[1]),
            num(xi0[0]),
            num(xi0[1]),
            num(rot.alpha),
            num(rot.t0),
            num(rot.constraint),
            ok.to_string(),
        ]);
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!("{} of 100 pairs admissible{}", 100 - failures.len(), summary_list(&failures)),
        csv: csv.0,
    }
}

fn summary_list(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!(" (failed: {})", items.iter().take(5).cloned().collect::<Vec<_>>().join("; "))
    }
}

/// A traced geodesic start that leaves the chart nontangentially.
fn random_start(chart: &MetricChart, r: &mut ChaCha8Rng) -> Option<GeodesicPath> {
    for _ in 0..200 {
        let x = chart.interior_point(r.gen_range(0.0..1.0), r.gen_range(0.2..0.8));
        let th: f64 = r.gen_range(0.0..2.0 * PI);
        let Ok(start) = UnitCovector::from_velocity(chart, x, [th.cos(), th.sin()]) else { continue };
        let Ok(path) = trace(chart, start, &TraceOptions { max_length: 30.0, ..TraceOptions::default() }) else {
            continue;
        };
        if nontangential(&path) {
            return Some(path);
        }
    }
    None
}

fn c4() -> Outcome {
    let mut r = rng(4);
    let sphere = build_surface(SurfaceSpec::SpherePatch { cap: 0.4 }, 4, None).expect("sphere");
    let surfaces: Vec<(&str, MetricChart, usize)> = vec![
        ("sphere", sphere.clone(), 6),
        (
            "catenoid",
            build_surface(SurfaceSpec::SurfaceOfRevolution { profile: Profile::Catenoid { c: 1.0, s0: 0.5, length: 1.0 } }, 4, None)
                .expect("catenoid"),
            4,
        ),
        (
            "wavy",
            build_surface(
                SurfaceSpec::SurfaceOfRevolution { profile: Profile::Wavy { r0: 1.0, amp: 0.2, freq: 3.0, length: 2.0 } },
                4,
                None,
            )
            .expect("wavy"),
            4,
        ),
        (
            "perturbed_flat",
            build_surface(SurfaceSpec::PerturbedFlat { amplitude: 0.3, bump: Bump::default() }, 4, None).expect("perturbed"),
            3,
        ),
        ("flat_cylinder", cylinder(2.0), 1),
    ];
    let mut csv = Csv::new("beam,surface,m0_re,m0_im,samples,min_im_m,closed_form_err");
    let mut mins = Vec::new();
    let mut flat_err = 0.0f64;
    let mut beam = 0usize;
    let mut record = |csv: &mut Csv, name: &str, m0: C, n: usize, min: f64, err: Option<f64>| {
        csv.row(&[beam.to_string(), name.into(), num(m0.re), num(m0.im), n.to_string(), num(min), err.map(num).unwrap_or_default()]);
        beam += 1;
    };

    // The equator closes up, and its first conjugate point sits at t = π.
    let equator = {
        let start = UnitCovector::normalized(&sphere, [0.0, FRAC_PI_2], [1.0, 0.0]).expect("equator start");
        trace(&sphere, start, &TraceOptions { max_length: 4.0, ..TraceOptions::default() })
    };
    let equator = match equator.and_then(|p| build_frame(&sphere, &p, Some(0.05))) {
        Ok(f) => f,
        Err(e) => return Outcome::error(e),
    };
    let times: Vec<f64> = equator.path.samples.iter().map(|s| s.t).collect();
    if !(times[0] < -PI && *times.last().unwrap() > PI) {
        return Outcome::error("equator samples do not reach the conjugate points");
    }
    let m0 = C::new(0.5, 0.5);
    match hessian_flow(&equator, m0, &times) {
        Ok(hf) => {
            let min = hf.m_perp.iter().map(|m| m.im).fold(f64::INFINITY, f64::min);
            mins.push(min);
            record(&mut csv, "sphere_equator", m0, times.len(), min, None);
        }
        Err(e) => return Outcome::error(e),
    }

    // Flat beam with m0 = i against the closed form.
    {
        let chart = cylinder(2.0);
        let start = UnitCovector::normalized(&chart, [1.0, 1.0], [0.0, 1.0]).expect("flat start");
        let frame = match trace(&chart, start, &TraceOptions::default()).and_then(|p| build_frame(&chart, &p, Some(0.1))) {
            Ok(f) => f,
            Err(e) => return Outcome::error(e),
        };
        let times: Vec<f64> = frame.path.samples.iter().map(|s| s.t).collect();
        let m0 = C::new(0.0, 1.0);
        match hessian_flow(&frame, m0, &times) {
            Ok(hf) => {
                for (m, &t) in hf.m_perp.iter().zip(&times) {
                    flat_err = flat_err.max((m - C::new(t, 1.0) / (1.0 + t * t)).norm());
                }
                let min = hf.m_perp.iter().map(|m| m.im).fold(f64::INFINITY, f64::min);
                mins.push(min);
                record(&mut csv, "flat_closed_form", m0, times.len(), min, Some(flat_err));
            }
            Err(e) => return Outcome::error(e),
        }
    }

    for (name, chart, count) in &surfaces {
        for _ in 0..*count {
            let Some(path) = random_start(chart, &mut r) else {
                return Outcome::error(format!("no nontangential geodesic found on {name}"));
            };
            let m0 = C::new(r.gen_range(-1.0..1.0), r.gen_range(0.2..2.0));
            let (t1, t2) = path.interior_range();
            let frame = match build_frame(chart, &path, Some(0.05)) {
                Ok(f) => f,
                Err(e) => return Outcome::error(e),
            };
            let times: Vec<f64> = path.samples.iter().map(|s| s.t).filter(|t| *t >= t1 && *t <= t2).collect();
            match hessian_flow(&frame, m0, &times) {
                Ok(hf) => {
                    let min = hf.m_perp.iter().map(|m| m.im).fold(f64::INFINITY, f64::min);
                    mins.push(min);
                    record(&mut csv, name, m0, times.len(), min, None);
                }
                Err(e) => return Outcome::error(e),
            }
        }
    }
    let min = mins.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: mins.len() == 20 && min > 0.0 && flat_err <= 1e-9,
        detail: format!("{} beams, min Im M {min:.3e}, flat closed-form error {flat_err:.2e}", mins.len()),
        csv: csv.0,
    }
}

fn c5() -> Outcome {
    let chart = build_surface(SurfaceSpec::SpherePatch { cap: 0.3 }, 12, None).expect("sphere");
    let frame = match UnitCovector::from_velocity(&chart, [0.5, FRAC_PI_2], [0.1, 1.0])
        .and_then(|s| trace(&chart, s, &TraceOptions::default()))
        .and_then(|p| build_frame(&chart, &p, Some(0.25)))
    {
        Ok(f) => f,
        Err(e) => return Outcome::error(e),
    };
    // Generic initial jets with nonzero odd coefficients.
    let psi = [C::new(0.3, 0.1), C::new(0.0, 0.2), C::new(0.1, -0.05), C::new(0.05, 0.02)];
    let rhos = [0.05, 0.1, 0.2];
    let mut csv = Csv::new("k,rho,eikonal_residual");
    let mut parts = Vec::new();
    let mut pass = true;
    for k in [2usize, 4, 6] {
        let pj = match phase_jet(&frame, k, C::new(0.2, 1.0), &psi[..k.saturating_sub(2).min(psi.len())]) {
            Ok(p) => p,
            Err(e) => return Outcome::error(e),
        };
        let res: Vec<f64> = rhos.iter().map(|&rho| pj.eikonal_residual(rho, 16)).collect();
        for (rho, v) in rhos.iter().zip(&res) {
            csv.row(&[k.to_string(), num(*rho), num(*v)]);
        }
        let lx: Vec<f64> = rhos.iter().map(|v: &f64| v.ln()).collect();
        let ly: Vec<f64> = res.iter().map(|v| v.ln()).collect();
        let slope = fit_line(&lx, &ly).map(|f| f.slope).unwrap_or(f64::NAN);
        let ok = (slope - (k as f64 + 1.0)).abs() <= 0.3;
        pass &= ok;
        parts.push(format!("K={k} slope {slope:.2} (target {}±0.3){}", k + 1, if ok { "" } else { " MISS" }));
    }
    Outcome { pass, detail: parts.join(", "), csv: csv.0 }
}

fn c6() -> Outcome {
    let chart = build_surface(SurfaceSpec::FlatCylinder { a: 2.0 }, 12, None).expect("cylinder");
    let frame = match UnitCovector::normalized(&chart, [1.0, 1.0], [0.0, 1.0])
        .and_then(|s| trace(&chart, s, &TraceOptions::default()))
        .and_then(|p| build_frame(&chart, &p, Some(0.5)))
    {
        Ok(f) => f,
        Err(e) => return Outcome::error(e),
    };
    let order = 5;
    let n = 3;
    let exact = ExactFlatPhase::new(1.0).expect("exact phase");
    let amp = match phase_jet(&frame, order, C::new(0.0, 1.0), &exact.jets(0.0, order)[3..])
        .and_then(|pj| transport(&pj, 4, n, 0.3).map(|a| (pj, a)))
    {
        Ok(v) => v,
        Err(e) => return Outcome::error(e),
    };
    let (pj, amp) = amp;
    let (t1, t2) = frame.path.interior_range();
    let mut csv = Csv::new("t,a0_re,a0_im,err");
    let mut a0_err = 0.0f64;
    for &t in amp.grid.nodes.iter().filter(|t| **t >= t1 && **t <= t2) {
        let a0 = amp.coeff(0, 0, t);
        let err = (a0 - C::new(1.0, t).sqrt().inv()).norm();
        a0_err = a0_err.max(err);
        csv.row(&[num(t), num(a0.re), num(a0.im), num(err)]);
    }
    let coeffs = hierarchy_check(&pj, &amp);
    for (k, c) in coeffs.iter().enumerate() {
        csv.row(&[format!("h^{}", k + 1), num(*c), String::new(), String::new()]);
    }
    let lower = coeffs[..=n].iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: a0_err <= 1e-8 && lower <= 1e-8,
        detail: format!(
            "a0 error {a0_err:.2e}, max coefficient of h^1..h^{} {lower:.2e}, h^{} defect {:.2e}",
            n + 1,
            n + 2,
            coeffs[n + 1]
        ),
        csv: csv.0,
    }
}

fn c7() -> Outcome {
    let chart = cylinder(1.0);
    let frame = match UnitCovector::normalized(&chart, [0.0, 0.5], [0.0, 1.0])
        .and_then(|s| trace(&chart, s, &TraceOptions::default()))
        .and_then(|p| build_frame(&chart, &p, Some(4.0)))
    {
        Ok(f) => f,
        Err(e) => return Outcome::error(e),
    };
    let params = BeamParams {
        delta_prime: 4.0,
        lambda: 0.0,
        kind: BeamKind::ExactFlat { b: 3.0, n: NPolicy::Scaled { n_max: 40 } },
    };
    let hs = [1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0, 1.0 / 48.0, 1.0 / 64.0];
    let rep = match build_beam(&frame, &params).and_then(|b| residual_sweep(&b, &hs, &QuadSpec::default())) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut csv = Csv::new("h,n_terms,residual,v_norm");
    for r in &rep.rows {
        csv.row(&[num(r.h), r.n_terms.to_string(), num(r.residual), num(r.v_norm)]);
    }
    let (Some(e), Some(p)) = (rep.exponential, rep.power) else {
        return Outcome::error("decay fit failed");
    };
    let norms_ok = rep.rows.iter().all(|r| (1.0 / 3.0..=3.0).contains(&r.v_norm));

    // A curved chart at fixed K only promises a power law of order (K+1)/2.
    let k = 4;
    let chart = build_surface(
        SurfaceSpec::SurfaceOfRevolution { profile: Profile::Catenoid { c: 1.0, s0: 0.5, length: 1.0 } },
        k + 2,
        None,
    )
    .expect("catenoid");
    let curved_hs = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let curved = UnitCovector::normalized(&chart, [PI, 0.5], [0.3, 1.0])
        .and_then(|s| trace(&chart, s, &TraceOptions::default()))
        .and_then(|p| build_frame(&chart, &p, Some(1.5)))
        .and_then(|f| build_beam(&f, &jets_beam(1.5, k, 2, 2)))
        .and_then(|b| residual_sweep(&b, &curved_hs, &QuadSpec::default()));
    let curved = match curved {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    for r in &curved.rows {
        csv.row(&[num(r.h), r.n_terms.to_string(), num(r.residual), num(r.v_norm)]);
    }
    let Some(cp) = curved.power else {
        return Outcome::error("curved decay fit failed");
    };
    let slope_min = (k as f64 + 1.0) / 2.0 - 0.3;
    let curved_norms = curved.rows.iter().all(|r| (1.0 / 3.0..=3.0).contains(&r.v_norm));
    Outcome {
        pass: e.r2 >= 0.95 && e.rate > 0.0 && e.r2 > p.r2 && norms_ok && cp.rate >= slope_min && curved_norms,
        detail: format!(
            "flat: exponential c1 {:.4} R2 {:.4} vs power R2 {:.4}, norms within [1/3, 3]: {norms_ok}; \
             catenoid K={k}: power slope {:.2} (need >= {slope_min:.1}), norms within [1/3, 3]: {curved_norms}",
            e.rate, e.r2, p.r2, cp.rate
        ),
        csv: csv.0,
    }
}

/// Spacing at or below the admissible one that puts an even number of
/// panels across the cutoff, so `α_x` sits on a panel edge.
fn aligned_spacing(h: f64, cutoff: Cutoff, order: usize, freq: f64) -> f64 {
    let widest = required_spacing(h, freq) * order as f64 * 2.0 / PI;
    let panels = 2.0 * (cutoff.radius / widest).ceil();
    2.0 * cutoff.radius / panels * PI / (2.0 * order as f64) * (1.0 + 1e-13)
}

fn fbi_values(u: &(impl Fn(&[f64; 2]) -> C + Sync), alpha: PhasePoint<2>, cutoff: Cutoff, hs: &[f64]) -> Result<Vec<f64>, String> {
    hs.iter()
        .map(|&h| {
            let mut q = FbiQuery::standard(alpha, cutoff);
            q.spacing = Some(aligned_spacing(h, cutoff, q.order, 1.0).min(required_spacing(h, 1.0)));
            transform(u, &q, h).map(|v| v.norm()).map_err(|e| e.to_string())
        })
        .collect()
}

fn c8() -> Outcome {
    let hs = [1.0 / 4.0, 1.0 / 6.0, 1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0];
    let th = Thresholds::default();
    let cutoff = Cutoff { radius: 2.0, plateau: 1.5 };
    let mut csv = Csv::new("input,alpha_x1,alpha_x2,alpha_xi1,alpha_xi2,expected,class,c1,p,reference_c1");
    let mut misses = Vec::new();
    let mut worst_rel = 0.0f64;

    let gauss = |x: &[f64; 2]| C::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0);
    let centers = [[0.0, 0.0], [0.3, 0.0], [-0.3, 0.2], [0.0, -0.4], [0.2, 0.3]];
    for (i, c) in centers.iter().enumerate() {
        for k in 0..5 {
            let ang = 2.0 * PI * k as f64 / 5.0 + 0.3 * i as f64;
            let alpha = PhasePoint::new(*c, [ang.cos(), ang.sin()]).expect("unit covector");
            let vals = match fbi_values(&gauss, alpha, cutoff, &hs) {
                Ok(v) => v,
                Err(e) => return Outcome::error(e),
            };
            let oracle: Vec<f64> = hs.iter().map(|&h| gaussian_oracle(&alpha, h)).collect();
            let (rep, refr) = match (decay_fit(&hs, &vals, &th), decay_fit(&hs, &oracle, &th)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
            };
            let c1 = rep.exponential.map(|f| f.rate).unwrap_or(f64::NAN);
            let r1 = refr.exponential.map(|f| f.rate).unwrap_or(f64::NAN);
            let rel = ((c1 - r1) / r1).abs();
            worst_rel = worst_rel.max(rel);
            if rep.class != Classification::AnalyticDecay || !(rel <= 0.1) {
                misses.push(format!("gaussian {:?} {:?}: {} rel {rel:.3}", alpha.x, alpha.xi, rep.class));
            }
            row_fbi(&mut csv, "gaussian", &alpha, Classification::AnalyticDecay, &rep, r1);
        }
    }

    let jump = |x: &[f64; 2]| C::new(if x[0] > 0.0 { 1.0 } else { 0.0 }, 0.0);
    let s = (20.0f64).to_radians().sin_cos();
    let mut jump_alphas: Vec<([f64; 2], [f64; 2], Classification)> = Vec::new();
    for y in [0.0, 0.3] {
        for sign in [1.0, -1.0] {
            jump_alphas.push(([0.0, y], [sign, 0.0], Classification::Singular));
        }
    }
    for (x, xi) in [
        ([0.0, 0.0], [0.0, 1.0]),
        ([0.0, 0.3], [0.0, -1.0]),
        ([0.0, 0.0], [s.0, s.1]),
        ([0.0, 0.3], [-s.0, -s.1]),
        ([2.5, 0.0], [1.0, 0.0]),
        ([2.5, 0.3], [-1.0, 0.0]),
        ([2.5, -0.2], [0.6, 0.8]),
        ([-2.5, 0.0], [1.0, 0.0]),
    ] {
        jump_alphas.push((x, xi, Classification::AnalyticDecay));
    }
    for (x, xi, expected) in jump_alphas {
        let alpha = PhasePoint::new(x, xi).expect("unit covector");
        let rep = match fbi_values(&jump, alpha, cutoff, &hs).map_err(|e| e.to_string()).and_then(|v| decay_fit(&hs, &v, &th).map_err(|e| e.to_string())) {
            Ok(r) => r,
            Err(e) => return Outcome::error(e),
        };
        if rep.class != expected {
            misses.push(format!("jump {x:?} {xi:?}: {} (expected {expected})", rep.class));
        }
        row_fbi(&mut csv, "jump", &alpha, expected, &rep, f64::NAN);
    }
    Outcome {
        pass: misses.is_empty(),
        detail: format!(
            "25 gaussian points, 4 conormal and 8 control jump points; worst exponent deviation {:.1}%{}",
            100.0 * worst_rel,
            summary_list(&misses)
        ),
        csv: csv.0,
    }
}

fn row_fbi(csv: &mut Csv, input: &str, alpha: &PhasePoint<2>, expected: Classification, rep: &beamlab_core::fbi::DecayReport, reference: f64) {
    csv.row(&[
        input.into(),
        num(alpha.x[0]),
        num(alpha.x[1]),
        num(alpha.xi[0]),
        num(alpha.xi[1]),
        expected.to_string(),
        rep.class.to_string(),
        rep.exponential.map(|f| num(f.rate)).unwrap_or_default(),
        rep.power.map(|f| num(f.rate)).unwrap_or_default(),
        if reference.is_finite() { num(reference) } else { String::new() },
    ]);
}

fn jets_beam(delta_prime: f64, phase_order: usize, amp_order: usize, n: usize) -> BeamParams {
    BeamParams {
        delta_prime,
        lambda: 0.0,
        kind: BeamKind::Jets { m0: C::new(0.0, 1.0), psi: vec![], phase_order, amp_order, n: NPolicy::Fixed(n) },
    }
}

fn c9() -> Outcome {
    let chart = cylinder(1.0);
    let exp = ProductExperiment {
        chart: chart.clone(),
        lambda: 0.5,
        alpha0: UnitCovector { x: [PI, 0.5], xi: [0.6, 0.8] },
        zeta1: None,
        grid: PhaseGrid { radius: 0.02, n: 4 },
        beam: jets_beam(0.2, 2, 1, 0),
        frame_radius: 0.2,
        hs: vec![0.25, 0.125, 0.0625, 0.03125],
        slab: (-8.0, 8.0),
        window: None,
        sample_step: 0.02,
        sample_degree: 7,
        trace: TraceOptions::default(),
        tol: 1e-6,
        thresholds: Thresholds::default(),
        fbi_cutoff: Cutoff::default(),
    };
    let fam = match center_pair(&exp).and_then(|p| family(&chart, &p, exp.grid, &exp.trace, exp.tol)) {
        Ok(f) => f,
        Err(e) => return Outcome::error(e),
    };
    if fam.passing.len() < 50 {
        return Outcome::error(format!("only {} family members are admissible", fam.passing.len()));
    }
    let mut csv = Csv::new("member,x1,x2,xi1,xi2,t0,value,gradient_err,min_im_eigenvalue");
    let (mut value, mut grad, mut eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for (i, pair) in fam.passing.iter().take(50).enumerate() {
        let bp = match beam_pair(&exp, pair) {
            Ok(b) => b,
            Err(e) => return Outcome::error(e),
        };
        // The check itself errors on a violated bound; the report keeps the numbers.
        let pc = match combined_phase_conditions(&bp) {
            Ok(c) => c,
            Err(e) => return Outcome { pass: false, detail: format!("member {i}: {e}"), csv: csv.0 },
        };
        value = value.max(pc.value);
        grad = grad.max(pc.gradient_err);
        eig = eig.min(pc.min_im_eigenvalue);
        let a = pair.alpha;
        csv.row(&[
            i.to_string(),
            num(a.x[0]),
            num(a.x[1]),
            num(a.xi[0]),
            num(a.xi[1]),
            num(pc.t0),
            num(pc.value),
            num(pc.gradient_err),
            num(pc.min_im_eigenvalue),
        ]);
    }
    Outcome {
        pass: value <= 1e-10 && grad <= 1e-8 && eig > 0.0,
        detail: format!("50 members: max value {value:.2e}, max gradient error {grad:.2e}, min Im eigenvalue {eig:.3e}"),
        csv: csv.0,
    }
}

fn c10() -> Outcome {
    let a = 6.2;
    let chart = build_surface(SurfaceSpec::FlatCylinder { a }, 4, None).expect("cylinder");
    let x0 = [PI, a / 2.0];
    let s2 = 0.5f64.sqrt();
    let exp = ProductExperiment {
        chart,
        lambda: 0.5,
        alpha0: UnitCovector { x: x0, xi: [1.0, 0.0] },
        zeta1: Some([s2, s2]),
        grid: PhaseGrid { radius: 0.02, n: 3 },
        beam: jets_beam(4.0, 2, 1, 2),
        frame_radius: 4.0,
        hs: vec![0.25, 1.0 / 6.0, 0.125, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0],
        slab: (-8.0, 8.0),
        window: None,
        sample_step: 0.02,
        sample_degree: 7,
        trace: TraceOptions::default(),
        tol: 1e-6,
        thresholds: Thresholds::default(),
        fbi_cutoff: Cutoff { radius: 1.5, plateau: 1.1 },
    };
    let fields = [
        TestField::PeriodicBump { center: x0, width: 1.0, sigma: 0.6, sigma1: 1.0 },
        TestField::PeriodicJump { center: x0, width: 1.0, sigma: 0.6, sigma1: 1.0 },
    ];
    let hats = match fields
        .iter()
        .map(|f| hat_grid(f, exp.lambda, exp.slab, exp.window(), exp.sample_step, exp.sample_degree))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(h) => h,
        Err(e) => return Outcome::error(e),
    };
    let reps = match scan_with_hats(&exp, &[&hats[0], &hats[1]]) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut csv = Csv::new("field,x1,x2,xi1,xi2,product_class,product_c1,product_r2_exp,product_p,direct_class,agree");
    for (name, rep) in ["bump", "jump"].iter().zip(&reps) {
        calderon_rows(&mut csv, name, rep);
    }
    let (bump, jump) = (&reps[0], &reps[1]);
    let bump_ok = bump.rows.iter().all(|r| {
        r.product.class == Classification::AnalyticDecay && r.product.exponential.is_some_and(|f| f.r2 >= 0.9)
    });
    let center = jump
        .rows
        .iter()
        .find(|r| (r.alpha.x[0] - x0[0]).abs() < 1e-12 && (r.alpha.x[1] - x0[1]).abs() < 1e-12 && (r.alpha.xi[0] - 1.0).abs() < 1e-12);
    let center_ok = center.is_some_and(|r| r.product.class == Classification::Singular && r.agree);
    let singular = jump.rows.iter().filter(|r| r.product.class == Classification::Singular).count();
    let pass = bump_ok
        && center_ok
        && bump.agreement() == 1.0
        && jump.agreement() == 1.0
        && bump.rows.len() == 27
        && jump.rows.len() == 27;
    Outcome {
        pass,
        detail: format!(
            "bump: {}/{} analytic with R2>=0.9, agreement {:.0}%; jump: conormal verdict {}, {singular}/{} singular, agreement {:.0}%",
            bump.rows.iter().filter(|r| r.product.class == Classification::AnalyticDecay).count(),
            bump.rows.len(),
            100.0 * bump.agreement(),
            center.map(|r| r.product.class.to_string()).unwrap_or_else(|| "missing".into()),
            jump.rows.len(),
            100.0 * jump.agreement()
        ),
        csv: csv.0,
    }
}

fn calderon_rows(csv: &mut Csv, name: &str, rep: &CalderonReport) {
    for r in &rep.rows {
        let e = r.product.exponential;
        csv.row(&[
            name.into(),
            num(r.alpha.x[0]),
            num(r.alpha.x[1]),
            num(r.alpha.xi[0]),
            num(r.alpha.xi[1]),
            r.product.class.to_string(),
            e.map(|f| num(f.rate)).unwrap_or_default(),
            e.map(|f| num(f.r2)).unwrap_or_default(),
            r.product.power.map(|f| num(f.rate)).unwrap_or_default(),
            r.direct.class.to_string(),
            r.agree.to_string(),
        ]);
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() {
    // Cargo passes harness flags such as `--nocapture`; a bare `--list`
    // must still succeed without running anything.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let selected = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));

    let mut unexpected = Vec::new();
    let mut outputs = Vec::new();
    for c in criteria().into_iter().filter(|c| selected(c.id)) {
        let t = Instant::now();
        let out = (c.run)();
        let elapsed = t.elapsed();
        let in_budget = c.budget.is_none_or(|b| elapsed <= b);
        let pass = out.pass && in_budget;
        let budget = c.budget.map(|b| format!(" of {}s", b.as_secs())).unwrap_or_default();
        println!(
            "criterion {}: {} {}: {} [{:.1}s{budget}]",
            c.id,
            verdict(pass),
            c.name,
            out.detail,
            elapsed.as_secs_f64()
        );
        if !pass && !KNOWN_RED.contains(&c.id) {
            unexpected.push(c.id);
        }
        outputs.push((c, out.csv));
    }

    if selected(11) {
        let t = Instant::now();
        let mut differing = Vec::new();
        for (c, first) in &outputs {
            let again = (c.run)().csv;
            if again != *first || first.is_empty() {
                differing.push(c.id.to_string());
            }
        }
        let pass = differing.is_empty() && !outputs.is_empty();
        let detail = if differing.is_empty() {
            format!("{} criterion tables byte-identical on rerun", outputs.len())
        } else {
            format!("tables differ or are empty for criteria {}", differing.join(", "))
        };
        println!("criterion 11: {} determinism: {detail} [{:.1}s]", verdict(pass), t.elapsed().as_secs_f64());
        if !pass {
            unexpected.push(11);
        }
    }

    for id in KNOWN_RED.iter().filter(|id| selected(**id)) {
        println!("note: criterion {id} is a documented red result and does not abort the suite");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

//! End-to-end checks that chain several modules together.

use beamlab_core::admissibility::{cylinder_pair, family, reflected_pair, PhaseGrid};
use beamlab_core::calderon::{hat_grid, microlocal_scan, ProductExperiment, TestField};
use beamlab_core::fbi::{scan, Classification, Cutoff, FbiQuery, Field, PhasePoint, SampledField, Thresholds};
use beamlab_core::fermi::build_frame;
use beamlab_core::geodesic::{trace, TraceOptions, UnitCovector};
use beamlab_core::manifold::{build_surface, SurfaceSpec};
use beamlab_core::quasimode::{build_beam, BeamKind, BeamParams, NPolicy, QuadSpec};
use num_complex::Complex64 as C;
use std::f64::consts::PI;

fn small_experiment(field_scale: f64) -> ProductExperiment {
    let chart = build_surface(SurfaceSpec::FlatCylinder { a: 1.0 }, 4, None).unwrap();
    ProductExperiment {
        chart,
        lambda: 0.5,
        alpha0: UnitCovector { x: [PI, 0.5], xi: [0.6, 0.8] },
        zeta1: None,
        grid: PhaseGrid { radius: 0.01 * field_scale, n: 1 },
        beam: BeamParams {
            delta_prime: 0.2,
            lambda: 0.0,
            kind: BeamKind::Jets { m0: C::new(0.0, 1.0), psi: vec![], phase_order: 2, amp_order: 1, n: NPolicy::Fixed(0) },
        },
        frame_radius: 0.2,
        hs: vec![0.25, 0.125, 0.0625, 0.03125],
        slab: (-6.0, 6.0),
        window: None,
        sample_step: 0.05,
        sample_degree: 5,
        trace: TraceOptions::default(),
        tol: 1e-6,
        thresholds: Thresholds::default(),
        fbi_cutoff: Cutoff { radius: 0.3, plateau: 0.2 },
    }
}

#[test]
fn zero_field_gives_exact_zero_in_both_pipelines() {
    let exp = small_experiment(1.0);
    let rep = microlocal_scan(&exp, &TestField::Zero).unwrap();
    assert_eq!(rep.rows.len(), 1);
    let row = &rep.rows[0];
    assert!(row.product.exact_zero && row.direct.exact_zero);
    assert_eq!(row.product.class, Classification::AnalyticDecay);
    assert_eq!(rep.agreement(), 1.0);
    assert!(row.phase.value < 1e-10 && row.phase.gradient_err < 1e-8 && row.phase.min_im_eigenvalue > 0.0);
}

#[test]
fn increasing_h_grid_is_rejected() {
    let mut exp = small_experiment(1.0);
    exp.hs = vec![0.03125, 0.0625, 0.125, 0.25];
    let err = microlocal_scan(&exp, &TestField::Zero).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn tabulated_hat_covers_the_window() {
    let exp = small_experiment(1.0);
    let f = TestField::Bump { center: [PI, 0.5], sigma: 0.3, sigma1: 1.0 };
    let hat = hat_grid(&f, exp.lambda, exp.slab, exp.window(), exp.sample_step, exp.sample_degree).unwrap();
    let (lo, hi) = hat.domain().unwrap();
    let (wlo, whi) = exp.window();
    for k in 0..2 {
        assert!(lo[k] <= wlo[k] + 1e-9 && hi[k] >= whi[k] - 1e-9);
    }
}

#[test]
fn reflected_and_rotated_pairs_agree_on_the_cylinder() {
    let chart = build_surface(SurfaceSpec::FlatCylinder { a: 1.0 }, 4, None).unwrap();
    let x0 = [1.0, 0.4];
    let xi0 = [0.6, 0.8];
    let rotated = cylinder_pair(&chart, x0, xi0, &TraceOptions::default(), 1e-6).unwrap();
    let reflected = reflected_pair(&chart, x0, xi0, rotated.gamma1.start.xi, &TraceOptions::default(), 1e-6).unwrap();
    assert!(rotated.report.passed && reflected.report.passed);
    assert!((rotated.t0 - reflected.t0).abs() < 1e-12);
    for k in 0..2 {
        assert!((rotated.gamma2.start.xi[k] - reflected.gamma2.start.xi[k]).abs() < 1e-12);
    }
    let fam = family(&chart, &rotated, PhaseGrid { radius: 0.01, n: 2 }, &TraceOptions::default(), 1e-6).unwrap();
    assert_eq!(fam.members.len(), 8);
    assert!(fam.passing.len() == 8 && fam.t0_drift < 0.1);
}

#[test]
fn sampled_gaussian_scans_as_analytic() {
    let n = 121;
    let step = 4.0 / (n - 1) as f64;
    let values: Vec<C> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let (x, y) = (-2.0 + i as f64 * step, -2.0 + j as f64 * step);
            C::new((-x * x - y * y).exp(), 0.0)
        })
        .collect();
    let u = SampledField::new([-2.0, -2.0], [step, step], [n, n], values, 5).unwrap();
    let alphas = [PhasePoint::new([0.0, 0.0], [0.0, 1.0]).unwrap(), PhasePoint::new([0.2, -0.1], [0.6, 0.8]).unwrap()];
    let template = FbiQuery::standard(alphas[0], Cutoff { radius: 1.0, plateau: 0.7 });
    let rep = scan(&u, &alphas, &[0.25, 0.125, 0.0625, 0.03125], &template, &Thresholds::default()).unwrap();
    assert!(rep.classes().iter().all(|c| *c == Classification::AnalyticDecay), "{:?}", rep.classes());
}

#[test]
fn quasimode_norm_is_order_one_on_the_sphere() {
    let chart = build_surface(SurfaceSpec::SpherePatch { cap: 0.4 }, 6, None).unwrap();
    let start = UnitCovector::normalized(&chart, [0.0, PI / 2.0], [0.1, 1.0]).unwrap();
    let path = trace(&chart, start, &TraceOptions::default()).unwrap();
    let frame = build_frame(&chart, &path, Some(0.3)).unwrap();
    let params = BeamParams {
        delta_prime: 0.3,
        lambda: 0.0,
        kind: BeamKind::Jets { m0: C::new(0.0, 1.0), psi: vec![], phase_order: 4, amp_order: 2, n: NPolicy::Fixed(1) },
    };
    let beam = build_beam(&frame, &params).unwrap();
    let q = beam.assemble(0.05).unwrap();
    let norm = q.l2_norm(&QuadSpec { refine: 4.0, ..QuadSpec::default() }).unwrap();
    assert!(norm.value > 1.0 / 3.0 && norm.value < 3.0, "{}", norm.value);
    assert!(norm.error < 1e-3 * norm.value, "value {} error {}", norm.value, norm.error);
    // The beam is concentrated on its geodesic.
    let on = q.value_fermi(0.0, 0.0).unwrap().norm();
    let off = q.value_fermi(0.0, 0.25).unwrap().norm();
    assert!(off < 1e-3 * on);
}

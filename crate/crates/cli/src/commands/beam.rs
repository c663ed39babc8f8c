//! `beam` and `residual`.

use super::{h_list, start_covector};
use crate::error::{CliError, CliResult};
use crate::output::{num, opt_num, write_json, Table};
use crate::{Context, Start};
use beamlab_core::beam_phase::{phase_jet, ExactFlatPhase};
use beamlab_core::fermi::{build_frame, FermiFrame};
use beamlab_core::geodesic::trace as trace_path;
use beamlab_core::quasimode::{build_beam, residual_sweep, Beam, BeamKind, QuadSpec};
use num_complex::Complex64 as C;
use serde_json::json;
use std::path::Path;

fn frame_and_beam(ctx: &Context, start: &Start) -> CliResult<(FermiFrame, Beam)> {
    let chart = ctx.cfg.chart()?;
    let u = start_covector(ctx, start, &chart)?;
    let path = trace_path(&chart, u, &ctx.cfg.trace_options()?)?;
    let frame = build_frame(&chart, &path, Some(ctx.cfg.frame_radius()?))?;
    let beam = build_beam(&frame, &ctx.cfg.beam_params()?)?;
    Ok((frame, beam))
}

fn cplx(z: C) -> [f64; 2] {
    [z.re, z.im]
}

fn phase_dump(frame: &FermiFrame, beam: &Beam) -> CliResult<serde_json::Value> {
    match &beam.params.kind {
        BeamKind::Jets { m0, psi, phase_order, .. } => {
            let pj = phase_jet(frame, *phase_order, *m0, psi)?;
            let nodes = &pj.grid.nodes;
            Ok(json!({
                "kind": "jets",
                "order": pj.order,
                "times": nodes,
                "m": nodes.iter().map(|&t| cplx(pj.hessian_perp(t))).collect::<Vec<_>>(),
                "coefficients": pj.phi.c.iter().map(|row| row.iter().map(|z| cplx(*z)).collect::<Vec<_>>()).collect::<Vec<_>>(),
            }))
        }
        BeamKind::ExactFlat { b, .. } => {
            let ph = ExactFlatPhase::new(*b)?;
            let order = 6;
            let times = &frame.times;
            let jets: Vec<Vec<C>> = times.iter().map(|&t| ph.jets(t, order)).collect();
            Ok(json!({
                "kind": "exact_flat",
                "order": order,
                "times": times,
                "m": jets.iter().map(|j| cplx(j[2] * 2.0)).collect::<Vec<_>>(),
                "coefficients": (0..=order).map(|m| jets.iter().map(|j| cplx(j[m])).collect::<Vec<_>>()).collect::<Vec<_>>(),
            }))
        }
    }
}

pub fn beam(ctx: &Context, start: &Start, dump_phase: Option<&Path>, dump_amp: Option<&Path>) -> CliResult<String> {
    let (frame, beam) = frame_and_beam(ctx, start)?;
    let c = beam.symbol_constant;
    let mut written = Vec::new();
    if let Some(p) = dump_phase {
        write_json(p, &phase_dump(&frame, &beam)?)?;
        written.push(p.display().to_string());
    }
    if let Some(p) = dump_amp {
        let mut t = Table::new(&["k", "sup_norm", "symbol_constant", "bound"]);
        for (k, s) in beam.sup_norms.iter().enumerate() {
            let kk = if k == 0 { 1.0 } else { (k as f64).powi(k as i32) };
            let bound = c.map(|c| c.powi(k as i32 + 1) * kk);
            t.push(vec![k.to_string(), num(*s), opt_num(c), opt_num(bound)]);
        }
        t.write(p)?;
        written.push(p.display().to_string());
    }
    let js = ctx.path("beam.json");
    let (t1, t2) = frame.path.interior_range();
    write_json(
        &js,
        &json!({
            "params": beam.params,
            "symbol_constant": c,
            "max_terms": beam.max_terms(),
            "interior_range": [t1, t2],
            "frame_radius": frame.radius,
            "cover": frame.cover,
            "transport_residual": frame.transport_residual,
        }),
    )?;
    written.push(js.display().to_string());
    Ok(format!("beam: symbol constant {}, {} terms -> {}", opt_num(c), beam.sup_norms.len(), written.join(", ")))
}

pub fn residual(ctx: &Context, start: &Start, h: Option<&str>) -> CliResult<String> {
    let hs = h_list(ctx, h)?;
    let (_, beam) = frame_and_beam(ctx, start)?;
    let q = QuadSpec { order: ctx.cfg.experiment.quad_order.unwrap_or(8), ..QuadSpec::default() };
    let rep = residual_sweep(&beam, &hs, &q)?;
    let mut t = Table::new(&["h", "residual", "v_norm"]);
    for r in &rep.rows {
        t.push(vec![num(r.h), num(r.residual), num(r.v_norm)]);
    }
    let csv = ctx.path("residual.csv");
    let js = ctx.path("residual.json");
    t.write(&csv)?;
    let fit = |name: &str, f: &beamlab_core::fit::DecayFit, rate: &str| {
        json!({"model": name, "params": {"log_c0": f.c0, rate: f.rate}, "r2": f.r2})
    };
    let (e, p) = match (&rep.exponential, &rep.power) {
        (Some(e), Some(p)) => (fit("exponential", e, "c1"), fit("power", p, "p")),
        _ if hs.len() < 3 => (serde_json::Value::Null, serde_json::Value::Null),
        _ => return Err(CliError::Numerical("decay fit failed".into())),
    };
    let best = match (&rep.exponential, &rep.power) {
        (Some(x), Some(y)) if x.r2 >= y.r2 => e.clone(),
        (Some(_), Some(_)) => p.clone(),
        _ => serde_json::Value::Null,
    };
    // The better-fitting model leads; both fits are kept alongside it.
    let mut summary = match &best {
        serde_json::Value::Null => json!({"model": null, "params": null, "r2": null}),
        b => b.clone(),
    };
    summary["exponential"] = e;
    summary["power"] = p;
    summary["symbol_constant"] = json!(rep.symbol_constant);
    summary["n_terms"] = json!(rep.rows.iter().map(|r| r.n_terms).collect::<Vec<_>>());
    write_json(&js, &summary)?;
    Ok(format!("residual: {} rows, best fit {} -> {}, {}", t.len(), best.get("model").unwrap_or(&json!("none")), csv.display(), js.display()))
}

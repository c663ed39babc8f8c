//! `trace`, `xray` and `admissible`.

use super::start_covector;
use crate::config;
use crate::error::{CliError, CliResult};
use crate::output::{num, opt_num, write_json, Table};
use crate::{Context, Start};
use beamlab_core::admissibility::{cylinder_pair, family, reflected_pair, PhaseGrid};
use beamlab_core::geodesic::{trace as trace_path, xray as xray_path, GeodesicPath, PathStatus, UnitCovector};
use beamlab_core::manifold::{MetricChart, SurfaceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::f64::consts::PI;

fn samples_table(path: &GeodesicPath) -> Table {
    let mut t = Table::new(&["t", "x1", "x2", "xi1", "xi2"]);
    for s in &path.samples {
        t.push(vec![num(s.t), num(s.x[0]), num(s.x[1]), num(s.xi[0]), num(s.xi[1])]);
    }
    t
}

fn footer(path: &GeodesicPath) -> serde_json::Value {
    json!({
        "entry_time": path.entry.map(|c| c.t),
        "exit_time": path.exit.map(|c| c.t),
        "nontangential": path.nontangential,
        "status": format!("{:?}", path.status).to_lowercase(),
        "reason": path.reason,
        "intersections": path.self_intersections.iter().map(|i| json!({"t": i.t, "s": i.s, "point": i.point})).collect::<Vec<_>>(),
    })
}

pub fn trace(ctx: &Context, start: &Start) -> CliResult<String> {
    let chart = ctx.cfg.chart()?;
    let u = start_covector(ctx, start, &chart)?;
    let path = trace_path(&chart, u, &ctx.cfg.trace_options()?)?;
    let (csv, js) = (ctx.path("trace.csv"), ctx.path("trace.json"));
    samples_table(&path).write(&csv)?;
    write_json(&js, &footer(&path))?;
    Ok(format!(
        "trace: {} samples, status {:?}, {} self-intersections -> {}, {}",
        path.samples.len(),
        path.status,
        path.self_intersections.len(),
        csv.display(),
        js.display()
    ))
}

/// Built-in integrands for the X-ray transform.
#[derive(Clone, Copy, Debug)]
enum XrayField {
    Const(f64),
    Gauss { c: [f64; 2], w: f64 },
    /// `cos(2πk (x2 − lo)/(hi − lo))`, which integrates to zero across the bounded axis.
    CosX2 { k: f64, lo: f64, len: f64 },
}

impl XrayField {
    fn parse(s: &str, chart: &MetricChart) -> CliResult<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let v = if rest.is_empty() { vec![] } else { config::floats("--field", rest)? };
        match (kind, v.as_slice()) {
            ("const", [c]) => Ok(Self::Const(*c)),
            ("gauss", [cx, cy, w]) if *w > 0.0 => Ok(Self::Gauss { c: [*cx, *cy], w: *w }),
            ("cos_x2", [k]) => Ok(Self::CosX2 { k: *k, lo: chart.lo[1], len: chart.hi[1] - chart.lo[1] }),
            _ => Err(CliError::Validation(format!(
                "--field must be `const:c`, `gauss:cx,cy,w` with w > 0 or `cos_x2:k`, got `{s}`"
            ))),
        }
    }

    fn eval(&self, x: &[f64; 2]) -> f64 {
        match *self {
            Self::Const(c) => c,
            Self::Gauss { c, w } => (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (w * w)).exp(),
            Self::CosX2 { k, lo, len } => (2.0 * PI * k * (x[1] - lo) / len).cos(),
        }
    }
}

pub fn xray(ctx: &Context, start: &Start, field: Option<&str>, random: Option<usize>) -> CliResult<String> {
    let chart = ctx.cfg.chart()?;
    let spec = field.map(str::to_string).or_else(|| ctx.cfg.experiment.xray_field.clone()).unwrap_or_else(|| "const:1".into());
    let f = XrayField::parse(&spec, &chart)?;
    let opts = ctx.cfg.trace_options()?;
    let csv = ctx.path("xray.csv");
    let js = ctx.path("xray.json");
    match random {
        None => {
            let u = start_covector(ctx, start, &chart)?;
            let path = trace_path(&chart, u, &opts)?;
            let r = xray_path(&path, |x| f.eval(x))?;
            samples_table(&path).write(&csv)?;
            let mut foot = footer(&path);
            foot["field"] = json!(spec);
            foot["xray"] = json!(r.value);
            foot["xray_error"] = json!(r.error_estimate);
            write_json(&js, &foot)?;
            Ok(format!("xray: value {} (error {:.1e}) -> {}, {}", num(r.value), r.error_estimate, csv.display(), js.display()))
        }
        Some(n) => {
            if n == 0 {
                return Err(CliError::Validation("--random must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
            let starts: Vec<UnitCovector> = (0..n)
                .map(|_| {
                    let x = chart.interior_point(rng.gen::<f64>(), rng.gen_range(0.05..0.95));
                    let th = rng.gen_range(0.0..2.0 * PI);
                    UnitCovector::normalized(&chart, x, [th.cos(), th.sin()])
                })
                .collect::<Result<_, _>>()?;
            let mut t = Table::new(&["id", "x1", "x2", "xi1", "xi2", "status", "length", "value", "error"]);
            let mut worst: f64 = 0.0;
            for (i, u) in starts.iter().enumerate() {
                let path = trace_path(&chart, *u, &opts)?;
                let r = (path.status != PathStatus::Trapped).then(|| xray_path(&path, |x| f.eval(x))).transpose()?;
                if let Some(r) = &r {
                    worst = worst.max(r.value.abs());
                }
                t.push(vec![
                    i.to_string(),
                    num(u.x[0]),
                    num(u.x[1]),
                    num(u.xi[0]),
                    num(u.xi[1]),
                    format!("{:?}", path.status).to_lowercase(),
                    opt_num(path.length()),
                    opt_num(r.map(|r| r.value)),
                    opt_num(r.map(|r| r.error_estimate)),
                ]);
            }
            t.write(&csv)?;
            write_json(&js, &json!({"field": spec, "seed": ctx.seed(), "count": n, "max_abs_value": worst}))?;
            Ok(format!("xray: {n} random geodesics, max |value| {worst:.3e} -> {}, {}", csv.display(), js.display()))
        }
    }
}

pub fn admissible(
    ctx: &Context,
    start: &Start,
    zeta1: Option<&str>,
    grid_radius: Option<f64>,
    grid_n: Option<usize>,
) -> CliResult<String> {
    let chart = ctx.cfg.chart()?;
    let alpha = start_covector(ctx, start, &chart)?;
    let opts = ctx.cfg.trace_options()?;
    let tol = ctx.cfg.tol()?;
    let zeta1 = match zeta1 {
        Some(s) => Some(config::pair("--zeta1", s)?),
        None => ctx.cfg.experiment.zeta1,
    };
    let pair = match zeta1 {
        Some(z) => reflected_pair(&chart, alpha.x, alpha.xi, z, &opts, tol)?,
        None if matches!(chart.spec, SurfaceSpec::FlatCylinder { .. }) => cylinder_pair(&chart, alpha.x, alpha.xi, &opts, tol)?,
        None => return Err(CliError::Validation("--zeta1 is required off the flat cylinder".into())),
    };
    let radius = grid_radius.or(ctx.cfg.grids.alpha_radius).unwrap_or(0.02);
    let n = grid_n.or(ctx.cfg.grids.alpha_n).unwrap_or(3);
    if !(radius >= 0.0) || n == 0 {
        return Err(CliError::Validation("--grid-radius must be non-negative and --grid-n at least 1".into()));
    }
    let csv = ctx.path("admissible.csv");
    let js = ctx.path("admissible.json");
    if !pair.report.passed {
        write_json(&js, &json!({"center": pair.report, "members": []}))?;
        return Err(CliError::Numerical(format!("the pair generating {:?} is not admissible; report in {}", alpha, js.display())));
    }
    let fam = family(&chart, &pair, PhaseGrid { radius, n }, &opts, tol)?;
    let mut t = Table::new(&["x1", "x2", "xi1", "xi2", "offset_x1", "offset_x2", "offset_angle", "t0", "passed"]);
    for m in &fam.members {
        t.push(vec![
            num(m.alpha.x[0]),
            num(m.alpha.x[1]),
            num(m.alpha.xi[0]),
            num(m.alpha.xi[1]),
            num(m.offset[0]),
            num(m.offset[1]),
            num(m.offset[2]),
            opt_num(m.t0),
            m.passed.to_string(),
        ]);
    }
    t.write(&csv)?;
    let passed = fam.members.iter().filter(|m| m.passed).count();
    write_json(
        &js,
        &json!({
            "center": pair.report,
            "zeta1": pair.gamma1.start.xi,
            "zeta2": pair.gamma2.start.xi,
            "members": fam.members,
            "verified_radius": fam.verified_radius,
            "t0_drift": fam.t0_drift,
        }),
    )?;
    Ok(format!(
        "admissible: t0 = {:.6}, {passed}/{} grid points pass, verified radius {} -> {}, {}",
        pair.t0,
        fam.members.len(),
        num(fam.verified_radius),
        csv.display(),
        js.display()
    ))
}

//! `fbi`: decay scan of sampled data.

use super::h_list;
use crate::config;
use crate::error::{CliError, CliResult};
use crate::output::{num, opt_num, write_json, Table};
use crate::Context;
use beamlab_core::fbi::{scan, FbiQuery, PhasePoint, SampledField};
use num_complex::Complex64 as C;
use serde_json::json;
use std::path::Path;

/// Reads `x1,x2,value` or `x1,x2,re,im` rows.
pub fn read_samples(path: &Path) -> CliResult<Vec<([f64; 2], C)>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: csv::Error| CliError::Validation(format!("{}: {e}", path.display()));
    let header: Vec<String> = r.headers().map_err(bad)?.iter().map(|h| h.trim().to_string()).collect();
    let complex = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x1", "x2", "value"] => false,
        ["x1", "x2", "re", "im"] => true,
        _ => {
            return Err(CliError::Validation(format!(
                "{}: header must be `x1,x2,value` or `x1,x2,re,im`, got `{}`",
                path.display(),
                header.join(",")
            )))
        }
    };
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(bad)?;
        let v: Vec<f64> = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Validation(format!("{} row {}: {e}", path.display(), line + 2)))?;
        let z = if complex { C::new(v[2], v[3]) } else { C::new(v[2], 0.0) };
        rows.push(([v[0], v[1]], z));
    }
    Ok(rows)
}

/// `x1,x2,xi1,xi2[,radius,n]`: `n²` base points on a square of half-side
/// `radius` times `n` directions rotated by up to `±radius` radians.
pub fn alpha_grid(s: &str) -> CliResult<Vec<PhasePoint<2>>> {
    let v = config::floats("--alpha-grid", s)?;
    let (c, radius, n) = match v.as_slice() {
        [a, b, c, d] => ([*a, *b, *c, *d], 0.0, 1),
        [a, b, c, d, r, n] if *r >= 0.0 && *n >= 1.0 && n.fract() == 0.0 => ([*a, *b, *c, *d], *r, *n as usize),
        _ => {
            return Err(CliError::Validation(format!(
                "--alpha-grid must be `x1,x2,xi1,xi2` or `x1,x2,xi1,xi2,radius,n` with radius ≥ 0 and integer n ≥ 1, got `{s}`"
            )))
        }
    };
    let norm = c[2].hypot(c[3]);
    if !(norm > 0.0) {
        return Err(CliError::Validation("--alpha-grid direction must be nonzero".into()));
    }
    let theta0 = c[3].atan2(c[2]);
    let u = |i: usize| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let th = theta0 + radius * u(k);
                out.push(PhasePoint::new([c[0] + radius * u(i), c[1] + radius * u(j)], [th.cos(), th.sin()])?);
            }
        }
    }
    Ok(out)
}

pub fn fbi(ctx: &Context, input: &Path, grid: &str, h: Option<&str>, degree: usize) -> CliResult<String> {
    let hs = h_list(ctx, h)?;
    let alphas = alpha_grid(grid)?;
    let field = SampledField::from_rows(&read_samples(input)?, degree)?;
    let template = FbiQuery::standard(alphas[0], ctx.cfg.cutoff()?);
    let rep = scan(&field, &alphas, &hs, &template, &ctx.cfg.thresholds()?)?;
    let mut t = Table::new(&["alpha_x1", "alpha_x2", "alpha_xi1", "alpha_xi2", "c1", "p", "r2_exp", "r2_pow", "class"]);
    for r in &rep.rows {
        let (e, p) = (r.report.exponential, r.report.power);
        t.push(vec![
            num(r.alpha.x[0]),
            num(r.alpha.x[1]),
            num(r.alpha.xi[0]),
            num(r.alpha.xi[1]),
            opt_num(e.map(|f| f.rate)),
            opt_num(p.map(|f| f.rate)),
            opt_num(e.map(|f| f.r2)),
            opt_num(p.map(|f| f.r2)),
            r.report.class.as_str().to_string(),
        ]);
    }
    let csv = ctx.path("fbi.csv");
    let js = ctx.path("fbi.json");
    t.write(&csv)?;
    let count = |name: &str| rep.rows.iter().filter(|r| r.report.class.as_str() == name).count();
    let counts = json!({
        "analytic_decay": count("analytic_decay"),
        "singular": count("singular"),
        "inconclusive": count("inconclusive"),
    });
    write_json(&js, &json!({"hs": rep.hs, "counts": counts, "warnings": rep.warnings}))?;
    Ok(format!("fbi: {} points classified {} -> {}, {}", rep.rows.len(), counts, csv.display(), js.display()))
}

//! `calderon`: the product-integral experiment with its direct FBI cross-check.

use super::{h_list, start_covector};
use crate::error::{CliError, CliResult};
use crate::output::{num, opt_num, write_json, Table};
use crate::{Context, Start};
use beamlab_core::admissibility::PhaseGrid;
use beamlab_core::calderon::{hat_grid, scan_with_hat, CalderonReport, ProductExperiment, SlabSamples};
use beamlab_core::fbi::DecayReport;
use serde_json::json;
use std::path::Path;

pub fn experiment(ctx: &Context) -> CliResult<ProductExperiment> {
    let cfg = &ctx.cfg;
    let chart = cfg.chart()?;
    let alpha0 = start_covector(ctx, &Start { point: None, xi: None }, &chart)?;
    let mut cfg_beam = cfg.clone();
    if cfg_beam.beam.mode.is_none() {
        cfg_beam.beam.mode = Some("jets".into());
    }
    let e = &cfg.experiment;
    let window = match (e.window_lo, e.window_hi) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => return Err(CliError::Validation("experiment.window_lo and window_hi must be given together".into())),
    };
    let slab = e.slab.unwrap_or([-8.0, 8.0]);
    if !(slab[1] > slab[0]) {
        return Err(CliError::Validation("experiment.slab must be increasing".into()));
    }
    let exp = ProductExperiment {
        chart,
        lambda: e.lambda.unwrap_or(0.5),
        alpha0,
        zeta1: e.zeta1,
        grid: PhaseGrid { radius: cfg.grids.alpha_radius.unwrap_or(0.02), n: cfg.grids.alpha_n.unwrap_or(3) },
        beam: cfg_beam.beam_params()?,
        frame_radius: cfg_beam.frame_radius()?,
        hs: h_list(ctx, None)?,
        slab: (slab[0], slab[1]),
        window,
        sample_step: e.sample_step.unwrap_or(0.02),
        sample_degree: e.sample_degree.unwrap_or(7),
        trace: cfg.trace_options()?,
        tol: cfg.tol()?,
        thresholds: cfg.thresholds()?,
        fbi_cutoff: cfg.cutoff()?,
    };
    exp.validate()?;
    Ok(exp)
}

/// Reads `x1,x2,x3,value` rows: `x1` runs along the Euclidean factor and
/// `(x2, x3)` are the chart coordinates.
fn read_slab(path: &Path) -> CliResult<SlabSamples> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: csv::Error| CliError::Validation(format!("{}: {e}", path.display()));
    let header: Vec<String> = r.headers().map_err(bad)?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["x1", "x2", "x3", "value"] {
        return Err(CliError::Validation(format!("{}: header must be `x1,x2,x3,value`", path.display())));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(bad)?;
        let v: Vec<f64> = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Validation(format!("{} row {}: {e}", path.display(), line + 2)))?;
        rows.push([v[0], v[1], v[2], v[3]]);
    }
    Ok(SlabSamples::from_rows(&rows)?)
}

fn fit_cells(r: &DecayReport) -> Vec<String> {
    let (e, p) = (r.exponential, r.power);
    vec![
        opt_num(e.map(|f| f.rate)),
        opt_num(p.map(|f| f.rate)),
        opt_num(e.map(|f| f.r2)),
        opt_num(p.map(|f| f.r2)),
        r.class.as_str().to_string(),
    ]
}

pub fn report_table(rep: &CalderonReport) -> Table {
    let mut t = Table::new(&[
        "alpha_x1",
        "alpha_x2",
        "alpha_xi1",
        "alpha_xi2",
        "t0",
        "phase_value",
        "phase_gradient_err",
        "phase_min_im_eigenvalue",
        "product_c1",
        "product_p",
        "product_r2_exp",
        "product_r2_pow",
        "product_class",
        "direct_c1",
        "direct_p",
        "direct_r2_exp",
        "direct_r2_pow",
        "direct_class",
        "agree",
    ]);
    for r in &rep.rows {
        let mut row = vec![
            num(r.alpha.x[0]),
            num(r.alpha.x[1]),
            num(r.alpha.xi[0]),
            num(r.alpha.xi[1]),
            num(r.t0),
            num(r.phase.value),
            num(r.phase.gradient_err),
            num(r.phase.min_im_eigenvalue),
        ];
        row.extend(fit_cells(&r.product));
        row.extend(fit_cells(&r.direct));
        row.push(r.agree.to_string());
        t.push(row);
    }
    t
}

pub fn calderon(ctx: &Context) -> CliResult<String> {
    let exp = experiment(ctx)?;
    let field = ctx.cfg.field.as_ref().ok_or_else(|| CliError::Validation("calderon needs a [field] section".into()))?;
    let hat = match &field.file {
        Some(f) => read_slab(&ctx.config_dir.join(f))?.hat(exp.lambda, exp.sample_degree)?,
        None => {
            let tf = ctx.cfg.test_field()?.expect("built-in field when no file is given");
            hat_grid(&tf, exp.lambda, exp.slab, exp.window(), exp.sample_step, exp.sample_degree)?
        }
    };
    let rep = scan_with_hat(&exp, &hat)?;
    let csv = ctx.path("calderon.csv");
    let js = ctx.path("calderon.json");
    report_table(&rep).write(&csv)?;
    let count = |name: &str| rep.rows.iter().filter(|r| r.product.class.as_str() == name).count();
    let summary = json!({
        "hs": rep.hs,
        "lambda": exp.lambda,
        "family_size": rep.family_size,
        "scanned": rep.rows.len(),
        "verified_radius": rep.verified_radius,
        "agreement": rep.agreement(),
        "product_counts": {
            "analytic_decay": count("analytic_decay"),
            "singular": count("singular"),
            "inconclusive": count("inconclusive"),
        },
        "warnings": rep.warnings,
    });
    write_json(&js, &summary)?;
    Ok(format!(
        "calderon: {} points, agreement {:.0}%, product verdicts {} -> {}, {}",
        rep.rows.len(),
        100.0 * rep.agreement(),
        summary["product_counts"],
        csv.display(),
        js.display()
    ))
}

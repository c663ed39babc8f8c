pub mod beam;
pub mod calderon;
pub mod fbi;
pub mod geometry;

use crate::config;
use crate::error::CliResult;
use crate::{Context, Start};
use beamlab_core::geodesic::UnitCovector;
use beamlab_core::manifold::MetricChart;

/// Start covector from flags, then the config, then the chart midline
/// heading along the bounded axis.
pub fn start_covector(ctx: &Context, start: &Start, chart: &MetricChart) -> CliResult<UnitCovector> {
    let x = match &start.point {
        Some(s) => config::pair("--point", s)?,
        None => ctx.cfg.experiment.point.unwrap_or_else(|| chart.interior_point(0.0, 0.5)),
    };
    let xi = match &start.xi {
        Some(s) => config::pair("--xi", s)?,
        None => ctx.cfg.experiment.xi.unwrap_or([0.0, 1.0]),
    };
    chart.check_point(&x)?;
    Ok(UnitCovector::normalized(chart, x, xi)?)
}

pub fn h_list(ctx: &Context, flag: Option<&str>) -> CliResult<Vec<f64>> {
    let parsed = flag.map(|s| config::floats("--h", s)).transpose()?;
    ctx.cfg.hs(parsed.as_deref())
}

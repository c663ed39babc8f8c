//! Least-squares line fits with coefficient of determination.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

/// Fits `y ≈ intercept + slope x`. Returns `None` for fewer than two
/// distinct abscissae.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 =
        x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(LineFit { intercept, slope, r2 })
}

/// Least-squares fit of `log r` against one regressor.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    pub c0: f64,
    /// `c1` for the exponential model `log r = c0 − c1/h`; `p` for the
    /// power model `log r = c0 + p log h`.
    pub rate: f64,
    pub r2: f64,
}

fn to_fit(f: LineFit, negate: bool) -> DecayFit {
    DecayFit { c0: f.intercept, rate: if negate { -f.slope } else { f.slope }, r2: f.r2 }
}

/// Both decay models fitted to `(h, r)` pairs with `r > 0`.
pub fn fit_decay(hs: &[f64], rs: &[f64]) -> Option<(DecayFit, DecayFit)> {
    let logs: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    if logs.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let inv: Vec<f64> = hs.iter().map(|h| 1.0 / h).collect();
    let lh: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    Some((to_fit(fit_line(&inv, &logs)?, true), to_fit(fit_line(&lh, &logs)?, false)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_unit_r2() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }
}

//! Fixed-step Runge–Kutta integration over vector states.

use std::ops::{Add, Mul};

/// One classical RK4 step for `y' = f(t, y)`.
pub fn rk4_step<S, F>(f: &F, t: f64, y: &[S], h: f64) -> Vec<S>
where
    S: Copy + Add<Output = S> + Mul<f64, Output = S>,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    let axpy = |a: &[S], k: &[S], s: f64| -> Vec<S> {
        a.iter().zip(k).map(|(&a, &k)| a + k * s).collect()
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &axpy(y, &k2, 0.5 * h));
    let k4 = f(t + h, &axpy(y, &k3, h));
    y.iter()
        .enumerate()
        .map(|(i, &yi)| yi + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
        .collect()
}

/// Integrates from `t0` to `t1` with steps no larger than `max_step`.
pub fn rk4_to<S, F>(f: &F, t0: f64, y0: &[S], t1: f64, max_step: f64) -> Vec<S>
where
    S: Copy + Add<Output = S> + Mul<f64, Output = S>,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    let span = t1 - t0;
    if span == 0.0 {
        return y0.to_vec();
    }
    let n = (span.abs() / max_step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut y = y0.to_vec();
    for i in 0..n {
        y = rk4_step(f, t0 + i as f64 * h, &y, h);
    }
    y
}

/// Values at each of `times`, integrating outward from `t0` in both
/// directions so that every output is reached by a monotone march.
pub fn rk4_at_times<S, F>(f: &F, t0: f64, y0: &[S], times: &[f64], max_step: f64) -> Vec<Vec<S>>
where
    S: Copy + Add<Output = S> + Mul<f64, Output = S>,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    let mut out: Vec<Option<Vec<S>>> = vec![None; times.len()];
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let (back, fwd): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| times[i] < t0);
    let mut t = t0;
    let mut y = y0.to_vec();
    for i in fwd {
        y = rk4_to(f, t, &y, times[i], max_step);
        t = times[i];
        out[i] = Some(y.clone());
    }
    t = t0;
    y = y0.to_vec();
    for &i in back.iter().rev() {
        y = rk4_to(f, t, &y, times[i], max_step);
        t = times[i];
        out[i] = Some(y.clone());
    }
    out.into_iter().map(|v| v.expect("every time visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_both_directions() {
        let f = |_t: f64, y: &[f64]| vec![y[1], -y[0]];
        let times: [f64; 5] = [-2.0, -0.5, 0.0, 1.0, 3.0];
        let vals = rk4_at_times(&f, 0.0, &[1.0, 0.0], &times, 1e-3);
        for (t, v) in times.iter().zip(vals) {
            assert!((v[0] - t.cos()).abs() < 1e-11);
            assert!((v[1] + t.sin()).abs() < 1e-11);
        }
    }
}

//! Heuristic starting points for the built-in models.

use std::f64::consts::PI;

use super::models::{bose_factor, lorentzian_density, lorentzian_unit, Model, ModelSpec};
use crate::constants::frequency_to_kelvin;
use crate::error::{Error, Result};

/// Data-driven initial parameters for `model`, clamped into its bounds.
pub fn profile_initializer(model: &ModelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid(
            "initializer needs nonempty x and y of equal length",
        ));
    }
    let (lo, hi) = min_max(y);
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) {
        return Err(Error::FlatData {
            model: model.name(),
        });
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let raw = match model {
        ModelSpec::Lorentzian => {
            let (c, w, h, baseline) = refined_peak(&xs, &ys);
            vec![c, w, h * PI * w / 2.0, baseline]
        }
        ModelSpec::MultiLorentzian { peaks } => multi_peak(&xs, &ys, *peaks),
        ModelSpec::DipLorentzian => {
            let flipped: Vec<f64> = ys.iter().map(|v| -v).collect();
            let (c, w, depth, neg_background) = refined_peak(&xs, &flipped);
            let background = -neg_background;
            let contrast = if background != 0.0 {
                (depth / background).clamp(0.0, 1.0)
            } else {
                0.5
            };
            vec![c, w, contrast, background]
        }
        ModelSpec::MonoExponential => exponential(&xs, &ys),
        ModelSpec::SaturationRate { gamma_rad } => saturation(&xs, &ys, *gamma_rad),
        ModelSpec::Orbach { delta_gs } => {
            let (t0, r0, t1, r1) = extremes(&xs, &ys)?;
            let e = frequency_to_kelvin(*delta_gs);
            let alpha = ((r1 / r0).ln() / (e * (1.0 / t0 - 1.0 / t1))).max(1e-3);
            vec![r1 / bose_factor(*delta_gs, alpha, t1), alpha]
        }
        ModelSpec::OrbachRaman { delta_gs, alpha } => {
            let (t0, r0, t1, r1) = extremes(&xs, &ys)?;
            let (b0, b1) = (
                bose_factor(*delta_gs, *alpha, t0),
                bose_factor(*delta_gs, *alpha, t1),
            );
            let (p0, p1) = (t0.powi(7), t1.powi(7));
            // r = a·B + c·T⁷ at both extremes
            let det = b0 * p1 - b1 * p0;
            let mut a = (r0 * p1 - r1 * p0) / det;
            let mut c = (b0 * r1 - b1 * r0) / det;
            if !(a > 0.0) || !(c > 0.0) || !a.is_finite() || !c.is_finite() {
                // split the high-temperature rate evenly between the two terms
                a = 0.5 * r1 / b1;
                c = 0.5 * r1 / p1;
            }
            vec![a, c]
        }
    };
    Ok(raw
        .into_iter()
        .zip(model.bounds())
        .map(|(v, b)| b.project(v))
        .collect())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        })
}

/// Mean of the outer 10% of points on each side.
fn edge_level(ys: &[f64]) -> f64 {
    let k = (ys.len() / 10).max(1);
    let left = &ys[..k];
    let right = &ys[ys.len() - k..];
    (left.iter().sum::<f64>() + right.iter().sum::<f64>()) / (2 * k) as f64
}

/// Peak estimate whose baseline is corrected once for the Lorentzian tails
/// reaching the edges of the window. Returns `(center, fwhm, height, baseline)`.
fn refined_peak(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let mut baseline = edge_level(ys);
    let (mut c, mut w, mut h) = peak_estimate(xs, ys, baseline);
    for _ in 0..2 {
        let tail: Vec<f64> = xs.iter().map(|&x| h * lorentzian_unit(x, c, w)).collect();
        let corrected: Vec<f64> = ys.iter().zip(&tail).map(|(y, t)| y - t).collect();
        baseline = edge_level(&corrected);
        (c, w, h) = peak_estimate(xs, ys, baseline);
    }
    (c, w, h, baseline)
}

/// Center, FWHM and height above `baseline` of the tallest peak.
fn peak_estimate(xs: &[f64], ys: &[f64], baseline: f64) -> (f64, f64, f64) {
    let (imax, &ymax) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let height = ymax - baseline;
    let half = baseline + 0.5 * height;
    let left = (0..imax)
        .rev()
        .find(|&i| ys[i] <= half)
        .map(|i| interpolate_crossing(xs[i], ys[i], xs[i + 1], ys[i + 1], half));
    let right = (imax + 1..ys.len())
        .find(|&i| ys[i] <= half)
        .map(|i| interpolate_crossing(xs[i - 1], ys[i - 1], xs[i], ys[i], half));
    let c = xs[imax];
    let span = xs[xs.len() - 1] - xs[0];
    let width = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (c - l),
        (None, Some(r)) => 2.0 * (r - c),
        (None, None) => 0.5 * span,
    };
    let min_width = if xs.len() > 1 {
        span / (xs.len() - 1) as f64
    } else {
        1.0
    };
    (c, width.max(0.5 * min_width), height)
}

fn interpolate_crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        0.5 * (x0 + x1)
    } else {
        x0 + (level - y0) * (x1 - x0) / (y1 - y0)
    }
}

/// Greedy peak extraction: estimate the tallest peak, subtract it, repeat.
fn multi_peak(xs: &[f64], ys: &[f64], peaks: usize) -> Vec<f64> {
    let baseline = edge_level(ys);
    let mut rest: Vec<f64> = ys.to_vec();
    let mut out = Vec::with_capacity(3 * peaks + 1);
    for _ in 0..peaks {
        let (c, w, h) = peak_estimate(xs, &rest, baseline);
        let area = h.max(0.0) * PI * w / 2.0;
        for (r, &xi) in rest.iter_mut().zip(xs) {
            *r -= area * lorentzian_density(xi, c, w);
        }
        out.extend([c, w, area]);
    }
    out.push(baseline);
    out
}

fn exponential(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let k = (n / 10).max(1);
    let offset = ys[n - k..].iter().sum::<f64>() / k as f64;
    // three-point running mean tames noise before the log
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            ys[a..=b].iter().sum::<f64>() / (b - a + 1) as f64 - offset
        })
        .collect();
    let a0 = smooth[0];
    let sign = if a0 >= 0.0 { 1.0 } else { -1.0 };
    let thresh = 0.2 * a0.abs();
    // log-linear regression weighted by d², since var(ln d) ≈ σ²/d²
    let pts: Vec<(f64, f64, f64)> = xs
        .iter()
        .zip(&smooth)
        .map(|(&x, &d)| (x, sign * d))
        .filter(|&(_, d)| d > thresh)
        .map(|(x, d)| (x, d.ln(), d * d))
        .collect();
    let span = xs[n - 1] - xs[0];
    let (slope, icpt) = if pts.len() >= 2 {
        weighted_regression(&pts)
    } else {
        (-3.0 / span, a0.abs().ln())
    };
    let tau = if slope < 0.0 {
        -1.0 / slope
    } else {
        span / 3.0
    };
    // amplitude referred to x = 0
    let amplitude = sign * icpt.exp();
    vec![amplitude, tau, offset]
}

fn saturation(xs: &[f64], ys: &[f64], gamma_rad: f64) -> Vec<f64> {
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (sorted.len() / 10).max(1);
    let top = sorted[sorted.len() - k..].iter().sum::<f64>() / k as f64;
    let half = 0.5 * top;
    let i = ys.iter().position(|&v| v >= half).unwrap_or(0);
    let p_sat = if i == 0 {
        xs[0].max(f64::MIN_POSITIVE)
    } else {
        interpolate_crossing(xs[i - 1], ys[i - 1], xs[i], ys[i], half)
    };
    let x_top = xs[xs.len() - 1];
    let s = x_top / p_sat;
    let eta = 0.5 * gamma_rad * s / (1.0 + s) / top;
    vec![p_sat, eta]
}

fn extremes(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let (t0, r0) = (xs[0], ys[0]);
    let (t1, r1) = (xs[xs.len() - 1], ys[ys.len() - 1]);
    if !(t0 > 0.0) || !(r0 > 0.0) || !(r1 > 0.0) || t1 <= t0 {
        return Err(Error::invalid(
            "temperature models need positive temperatures and rates",
        ));
    }
    Ok((t0, r0, t1, r1))
}

fn weighted_regression(pts: &[(f64, f64, f64)]) -> (f64, f64) {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_data_is_flat() {
        let x = [1.0, 2.0, 3.0];
        let y = [4.0, 4.0, 4.0];
        assert!(matches!(
            profile_initializer(&ModelSpec::Lorentzian, &x, &y),
            Err(Error::FlatData { .. })
        ));
    }

    #[test]
    fn orbach_initializer_exact_on_pure_orbach() {
        let m = ModelSpec::Orbach { delta_gs: 3.903e12 };
        let x: Vec<f64> = (6..=14).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|&t| m.evaluate(&[1e12, 0.7], t)).collect();
        let p = profile_initializer(&m, &x, &y).unwrap();
        // Bose factor ≈ Boltzmann here, so the two-point estimate is near exact
        assert!((p[1] - 0.7).abs() < 1e-3, "{p:?}");
        assert!((p[0] / 1e12 - 1.0).abs() < 1e-2, "{p:?}");
    }

    #[test]
    fn orbach_raman_initializer_solves_two_point_system() {
        let m = ModelSpec::OrbachRaman {
            delta_gs: 3.903e12,
            alpha: 1.0,
        };
        let x: Vec<f64> = (6..=14).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|&t| m.evaluate(&[3e12, 1e-5], t)).collect();
        let p = profile_initializer(&m, &x, &y).unwrap();
        assert!((p[0] / 3e12 - 1.0).abs() < 1e-9);
        assert!((p[1] / 1e-5 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn saturation_initializer_is_in_the_right_decade() {
        let m = ModelSpec::SaturationRate { gamma_rad: 2.2e8 };
        let x: Vec<f64> = (0..30).map(|i| 0.2e-9 * 1.2f64.powi(i)).collect();
        let y: Vec<f64> = x.iter().map(|&p| m.evaluate(&[3.1e-9, 87.0], p)).collect();
        let p = profile_initializer(&m, &x, &y).unwrap();
        assert!(p[0] > 1e-9 && p[0] < 1e-8, "{p:?}");
        assert!(p[1] > 40.0 && p[1] < 200.0, "{p:?}");
    }
}

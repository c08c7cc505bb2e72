//! Test-side oracles shared by several integration targets.
#![allow(dead_code)]

use nalgebra::Matrix3;
use pbv_core::cpt::{unvectorize, vectorize, Liouvillian, C64};

type Vec9 = nalgebra::SVector<C64, 9>;

/// Long-time limit of `exp(L t) ρ₀` by fixed short steps. Checks at
/// `t0·2ᵏ` and stops once two successive checkpoints agree to `1e-11` or
/// `t` passes `t_max`.
pub fn long_time_limit(l: &Liouvillian, rho0: &Matrix3<C64>, t0: f64, t_max: f64) -> Matrix3<C64> {
    let norm = (0..9)
        .map(|j| l.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let h = t0 / (norm * t0 / 100.0).ceil().max(1.0);
    let step = (l * C64::new(h, 0.0)).exp();
    let run = |v: Vec9, n: u64| (0..n).fold(v, |v, _| step * v);
    let n0 = (t0 / h).round() as u64;
    let mut v = run(vectorize(rho0), n0);
    let (mut n_total, mut t) = (n0, t0);
    while t < t_max {
        let next = run(v, n_total);
        let diff = (next - v).iter().map(|z| z.norm()).fold(0.0, f64::max);
        v = next;
        n_total *= 2;
        t *= 2.0;
        if diff < 1e-11 {
            break;
        }
    }
    unvectorize(&v)
}

pub fn max_abs_diff(a: &Matrix3<C64>, b: &Matrix3<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Slope, intercept and R² of an ordinary least-squares line.
pub fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy * sxy / (sxx * syy))
}

use pbv_core::fitting::ModelSpec;

/// One representative problem per built-in model: `(model, truth, x)`.
pub fn model_zoo() -> Vec<(ModelSpec, Vec<f64>, Vec<f64>)> {
    let grid = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    vec![
        (
            ModelSpec::Lorentzian,
            vec![3e6, 38e6, 2e9, 5.0],
            grid(-200e6, 200e6, 201),
        ),
        (
            ModelSpec::MultiLorentzian { peaks: 2 },
            vec![-0.6e9, 40e6, 1e9, 0.55e9, 36e6, 1.5e9, 2.0],
            grid(-1.2e9, 1.2e9, 481),
        ),
        (
            ModelSpec::DipLorentzian,
            vec![4.24e9, 0.9e6, 0.8, 120.0],
            grid(4.235e9, 4.245e9, 161),
        ),
        (
            ModelSpec::MonoExponential,
            vec![-8.0, 12e-3, 20.0],
            grid(0.0, 60e-3, 40),
        ),
        (
            ModelSpec::SaturationRate {
                gamma_rad: 1.0 / 4.5e-9,
            },
            vec![3.1e-9, 87.0],
            grid(0.2e-9, 30e-9, 20),
        ),
        (
            ModelSpec::Orbach { delta_gs: 3.903e12 },
            vec![4e5, 0.5],
            grid(6.0, 14.0, 9),
        ),
        (
            ModelSpec::OrbachRaman {
                delta_gs: 3.903e12,
                alpha: 1.0,
            },
            vec![4.5e10, 6.2e-5],
            grid(6.0, 14.0, 9),
        ),
    ]
}

mod common;

use pbv_core::fitting::*;
use pbv_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn eval(model: &ModelSpec, p: &[f64], x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| model.evaluate(p, v)).collect()
}

fn noisy(y: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    y.iter().map(|v| v + n.sample(&mut rng)).collect()
}

/// Truth nudged by a few percent; peak centers move by a fraction of the width.
fn perturbed(model: &ModelSpec, truth: &[f64], u: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = truth.iter().zip(u).map(|(t, f)| t * f).collect();
    let centers: Vec<usize> = match model {
        ModelSpec::Lorentzian | ModelSpec::DipLorentzian => vec![0],
        ModelSpec::MultiLorentzian { peaks } => (0..*peaks).map(|k| 3 * k).collect(),
        _ => vec![],
    };
    for i in centers {
        p[i] = truth[i] + (u[i] - 1.0) * truth[i + 1];
    }
    p
}

fn central_jacobian(model: &ModelSpec, p: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    (0..p.len())
        .map(|j| {
            let h = model.fd_step(p, j, 1e-4);
            let (mut a, mut b) = (p.to_vec(), p.to_vec());
            a[j] += h;
            b[j] -= h;
            x.iter()
                .map(|&v| (model.evaluate(&a, v) - model.evaluate(&b, v)) / (2.0 * h))
                .collect()
        })
        .collect()
}

#[test]
fn noiseless_round_trip_for_every_model() {
    for (model, truth, x) in common::model_zoo() {
        let y = eval(&model, &truth, &x);
        let u: Vec<f64> = (0..truth.len())
            .map(|i| if i % 2 == 0 { 1.03 } else { 0.96 })
            .collect();
        let init = perturbed(&model, &truth, &u);
        let r = fit(&model, &x, &y, &vec![1.0; x.len()], &init).unwrap();
        for (got, want) in r.params.iter().zip(&truth) {
            assert!(
                (got / want - 1.0).abs() < 1e-6,
                "{}: {:?}",
                model.name(),
                r.params
            );
        }
        assert!(r.sigma.iter().all(|s| *s >= 0.0));
    }
}

#[test]
fn noisy_38_mhz_line_recovers_width() {
    let truth = [0.0, 38e6, 1.0, 0.0];
    let x: Vec<f64> = (0..201).map(|i| -200e6 + 2e6 * i as f64).collect();
    let clean = eval(&ModelSpec::Lorentzian, &truth, &x);
    let peak = clean.iter().cloned().fold(0.0, f64::max);
    let mut errs: Vec<f64> = (0..100)
        .map(|seed| {
            let y = noisy(&clean, 0.01 * peak, seed);
            let r = fit_auto(&ModelSpec::Lorentzian, &x, &y).unwrap();
            (r.params[1] / 38e6 - 1.0).abs()
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    assert!(errs[50] < 0.02, "median error {}", errs[50]);
}

#[test]
fn accepted_steps_never_raise_the_cost() {
    for seed in 0..20 {
        for (model, truth, x) in common::model_zoo() {
            let clean = eval(&model, &truth, &x);
            let scale = clean.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let y = noisy(&clean, 0.02 * scale, seed);
            let Ok(r) = fit_auto(&model, &x, &y) else {
                continue;
            };
            assert!(
                r.cost_history.windows(2).all(|w| w[1] <= w[0]),
                "{} seed {seed}",
                model.name()
            );
        }
    }
}

#[test]
fn consistent_unit_change_leaves_residual_unchanged() {
    let truth = [3e6, 38e6, 2e9, 5.0];
    let x: Vec<f64> = (0..201).map(|i| -200e6 + 2e6 * i as f64).collect();
    let y = noisy(&eval(&ModelSpec::Lorentzian, &truth, &x), 0.5, 7);
    let r_hz = fit_auto(&ModelSpec::Lorentzian, &x, &y).unwrap();
    // the same data in MHz: center, width and area scale, baseline does not
    let k = 1e-6;
    let xs: Vec<f64> = x.iter().map(|v| v * k).collect();
    let r_mhz = fit_auto(&ModelSpec::Lorentzian, &xs, &y).unwrap();
    assert!((r_hz.residual_norm / r_mhz.residual_norm - 1.0).abs() < 1e-9);
    assert!((r_mhz.params[1] / (r_hz.params[1] * k) - 1.0).abs() < 1e-6);

    let x: Vec<f64> = (0..40).map(|i| 1.5e-3 * i as f64).collect();
    let y = noisy(
        &eval(&ModelSpec::MonoExponential, &[-8.0, 12e-3, 20.0], &x),
        0.1,
        3,
    );
    let a = fit_auto(&ModelSpec::MonoExponential, &x, &y).unwrap();
    let xs: Vec<f64> = x.iter().map(|v| v * 1e3).collect();
    let b = fit_auto(&ModelSpec::MonoExponential, &xs, &y).unwrap();
    assert!((a.residual_norm / b.residual_norm - 1.0).abs() < 1e-9);
}

#[test]
fn lorentzian_initializer_is_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let u =
            |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(rng);
        let truth = [
            u(&mut rng, -50e6, 50e6),
            u(&mut rng, 20e6, 80e6),
            u(&mut rng, 0.5e9, 5e9),
            u(&mut rng, 1.0, 10.0),
        ];
        let x: Vec<f64> = (0..201).map(|i| -300e6 + 3e6 * i as f64).collect();
        let y = eval(&ModelSpec::Lorentzian, &truth, &x);
        let init = profile_initializer(&ModelSpec::Lorentzian, &x, &y).unwrap();
        // center is compared against the width scale
        assert!(
            (init[0] - truth[0]).abs() < 0.2 * truth[1],
            "{init:?} {truth:?}"
        );
        for i in 1..4 {
            assert!((init[i] / truth[i] - 1.0).abs() < 0.2, "{init:?} {truth:?}");
        }
    }
}

#[test]
fn exponential_initializer_tolerates_noise() {
    for seed in 0..20 {
        let x: Vec<f64> = (0..40).map(|i| 1.5e-3 * i as f64).collect();
        let clean = eval(&ModelSpec::MonoExponential, &[-8.0, 12e-3, 20.0], &x);
        // 5% of the decay amplitude
        let y = noisy(&clean, 0.05 * 8.0, seed);
        let init = profile_initializer(&ModelSpec::MonoExponential, &x, &y).unwrap();
        assert!((init[1] / 12e-3 - 1.0).abs() < 0.3, "seed {seed}: {init:?}");
    }
}

#[test]
fn constant_data_is_flat() {
    for (model, _, x) in common::model_zoo() {
        let y = vec![3.0; x.len()];
        assert!(
            matches!(
                profile_initializer(&model, &x, &y),
                Err(Error::FlatData { .. })
            ),
            "{}",
            model.name()
        );
    }
}

#[test]
fn initializer_output_is_within_bounds() {
    for (model, truth, x) in common::model_zoo() {
        let y = eval(&model, &truth, &x);
        let init = profile_initializer(&model, &x, &y).unwrap();
        for (v, b) in init.iter().zip(model.bounds()) {
            assert!(b.contains(*v), "{}: {init:?}", model.name());
        }
    }
}

proptest! {
    #[test]
    fn forward_jacobian_matches_central_difference(
        which in 0usize..7, u in prop::collection::vec(0.8f64..1.2, 7),
    ) {
        let (model, truth, x) = common::model_zoo().swap_remove(which);
        let p = perturbed(&model, &truth, &u);
        let fwd = forward_jacobian(&model, &p, &x, 1e-6);
        let cen = central_jacobian(&model, &p, &x);
        for (j, col) in cen.iter().enumerate() {
            let scale = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (i, c) in col.iter().enumerate() {
                prop_assert!(
                    (fwd[(i, j)] - c).abs() <= 1e-4 * scale,
                    "{} param {j} row {i}: {} vs {c}", model.name(), fwd[(i, j)]
                );
            }
        }
    }
}

#[test]
fn orbach_only_fit_of_combined_relaxation_gives_half_alpha() {
    let cal = pbv_core::calibration::Calibration::shipped();
    let n = pbv_core::calibration::relaxation_temperatures().len();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.05).unwrap();
        let noise: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let alpha = pbv_core::calibration::orbach_only_alpha(&cal, &noise).unwrap();
        assert!((alpha - 0.5).abs() <= 0.15, "seed {seed}: α = {alpha}");
    }
}

mod common;

use std::f64::consts::PI;

use nalgebra::Matrix3;
use pbv_core::cpt::*;
use proptest::prelude::*;

fn system(gamma_phi: f64) -> LambdaSystem {
    LambdaSystem {
        omega_pump: 0.0,
        omega_probe: 0.0,
        delta_pump: 0.0,
        raman_offset: 4.24e9,
        qubit_freq: 4.24e9,
        gamma_rad: 1.0 / 4.5e-9,
        branch_down: 1.0 / 88.0,
        branch_up: 87.0 / 88.0,
        gamma_dephasing: gamma_phi,
        gamma_spin: 30.0,
    }
}

fn rabi() -> RabiCalibration {
    RabiCalibration {
        p_sat: 3.1e-9,
        gamma_rad: 1.0 / 4.5e-9,
        pump_fraction: 0.5,
    }
}

fn driven(sys: LambdaSystem, power: f64) -> LambdaSystem {
    let (omega_pump, omega_probe) = rabi().split(power);
    LambdaSystem {
        omega_pump,
        omega_probe,
        ..sys
    }
}

fn random_system() -> impl Strategy<Value = LambdaSystem> {
    (
        1e7f64..1e9,
        0.0f64..2.0,
        0.0f64..2.0,
        -1.0f64..1.0,
        -2e7f64..2e7,
        0.01f64..0.99,
        1e4f64..1e7,
        1e3f64..1e5,
    )
        .prop_map(|(g, a, b, d, det, br, phi, s)| LambdaSystem {
            omega_pump: a * g,
            omega_probe: b * g,
            delta_pump: d * g,
            raman_offset: 4.24e9 + det,
            qubit_freq: 4.24e9,
            gamma_rad: g,
            branch_down: br,
            branch_up: 1.0 - br,
            gamma_dephasing: phi,
            gamma_spin: s,
        })
}

fn random_density(v: &[f64]) -> Matrix3<C64> {
    let a = Matrix3::from_fn(|i, j| C64::new(v[3 * i + j], v[9 + 3 * i + j]));
    let rho = a * a.adjoint();
    rho / rho.trace()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_preserves_trace(sys in random_system(), v in prop::collection::vec(-1.0f64..1.0, 18)) {
        let l = build_liouvillian(&sys).unwrap();
        let out = l * vectorize(&random_density(&v));
        let scale = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tr = out[0] + out[4] + out[8];
        prop_assert!(tr.norm() < 1e-12 * scale.max(1.0));
    }

    #[test]
    fn evolution_stays_physical(sys in random_system(), v in prop::collection::vec(-1.0f64..1.0, 18)) {
        let l = build_liouvillian(&sys).unwrap();
        let rho0 = random_density(&v);
        for k in [0.1, 1.0, 10.0] {
            let rho = DensityOperator { rho: propagate(&l, &rho0, k / sys.gamma_rad) };
            prop_assert!((rho.trace() - 1.0).abs() < 1e-9);
            prop_assert!(rho.min_eigenvalue() > -1e-10);
        }
    }

    #[test]
    fn steady_state_is_physical_and_matches_propagation(sys in random_system()) {
        let l = build_liouvillian(&sys).unwrap();
        let ss = steady_state(&l).unwrap();
        prop_assert!((ss.trace() - 1.0).abs() < 1e-9);
        prop_assert!(ss.min_eigenvalue() > -1e-10);
        let mut rho0 = Matrix3::<C64>::zeros();
        rho0[(DOWN, DOWN)] = C64::new(1.0, 0.0);
        let long = common::long_time_limit(&l, &rho0, 1e3 / sys.gamma_rad, 0.1);
        let d = common::max_abs_diff(&long, &ss.rho);
        prop_assert!(d < 1e-8, "{d:e}");
    }

    #[test]
    fn ideal_lambda_has_a_dark_state(g in 1e7f64..1e9, omega in 0.01f64..2.0, br in 0.01f64..0.99) {
        let sys = LambdaSystem {
            omega_pump: omega * g,
            omega_probe: omega * g,
            delta_pump: 0.0,
            raman_offset: 4.24e9,
            qubit_freq: 4.24e9,
            gamma_rad: g,
            branch_down: br,
            branch_up: 1.0 - br,
            gamma_dephasing: 0.0,
            gamma_spin: 0.0,
        };
        let rho = steady_state(&build_liouvillian(&sys).unwrap()).unwrap();
        prop_assert!(rho.population(EXCITED) < 1e-6);
    }
}

#[test]
fn undriven_without_flips_is_degenerate() {
    let sys = LambdaSystem {
        gamma_spin: 0.0,
        ..system(1e6)
    };
    assert!(matches!(
        steady_state(&build_liouvillian(&sys).unwrap()),
        Err(pbv_core::Error::DegenerateSteadyState { .. })
    ));
}

#[test]
fn calibrated_off_resonance_matches_propagation() {
    let sys = LambdaSystem {
        raman_offset: 4.24e9 + 0.3e6,
        ..driven(system(PI * 0.9e6), 20e-12)
    };
    let l = build_liouvillian(&sys).unwrap();
    let ss = steady_state(&l).unwrap();
    let long = common::long_time_limit(
        &l,
        &(Matrix3::<C64>::identity() / C64::new(3.0, 0.0)),
        1e3 / sys.gamma_rad,
        0.1,
    );
    let d = common::max_abs_diff(&long, &ss.rho);
    assert!(d < 1e-8, "{d:e}");
}

#[test]
fn full_contrast_without_dephasing() {
    let sys = LambdaSystem {
        gamma_spin: 0.0,
        ..driven(system(0.0), 10e-12)
    };
    let grid = raman_grid(&sys, 4.0, 41);
    let s = cpt_spectrum(&sys, &grid).unwrap();
    let max = s.iter().cloned().fold(0.0, f64::max);
    assert!(s[20] < 1e-6 * max, "{} {}", s[20], max);
}

#[test]
fn dip_sits_at_qubit_frequency_for_all_powers() {
    for power in [2e-12, 20e-12, 200e-12, 2e-9] {
        let sys = driven(system(PI * 0.9e6), power);
        let grid = raman_grid(&sys, 4.0, 161);
        let s = cpt_spectrum(&sys, &grid).unwrap();
        let (imin, _) = s
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let step = grid[1] - grid[0];
        assert!((grid[imin] - 4.24e9).abs() <= step, "power {power}");
    }
}

#[test]
fn doubling_rabi_frequencies_broadens_the_dip() {
    let base = driven(system(PI * 0.9e6), 20e-12);
    let strong = LambdaSystem {
        omega_pump: 2.0 * base.omega_pump,
        omega_probe: 2.0 * base.omega_probe,
        ..base
    };
    let width = |sys: &LambdaSystem| {
        let grid = raman_grid(&base, 6.0, 201);
        fit_dip(&grid, &cpt_spectrum(sys, &grid).unwrap())
            .unwrap()
            .params[1]
    };
    assert!(width(&strong) > width(&base));
}

#[test]
fn weak_drive_limit_matches_coherence_decay() {
    let sys = system(PI * 0.9e6);
    let powers: Vec<f64> = [5.0, 10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|p| p * 1e-12)
        .collect();
    let series = linewidth_vs_power(&sys, &powers, &rabi()).unwrap();
    assert!(series.windows(2).all(|w| w[1].fwhm > w[0].fwhm));
    let est = extract_t2star(&series).unwrap();
    let analytic = (sys.gamma_dephasing + sys.gamma_spin) / PI;
    assert!(
        (est.zero_power_fwhm / analytic - 1.0).abs() < 0.05,
        "{est:?}"
    );
}

#[test]
fn synthetic_series_round_trips_t2star() {
    let t2 = 500e-9;
    let sys = system(1.0 / t2);
    let powers: Vec<f64> = [5.0, 10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|p| p * 1e-12)
        .collect();
    let series = linewidth_vs_power(&sys, &powers, &rabi()).unwrap();
    let est = extract_t2star(&series).unwrap();
    assert!((est.t2star / t2 - 1.0).abs() < 0.05, "{est:?}");
}

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use pbv_core::emitter::*;
use proptest::prelude::*;

fn params(f_gs: f64, f_es: f64, s_gs: f64, s_es: f64) -> EmitterParams {
    EmitterParams {
        delta_gs: 3.903e12,
        delta_es: 5.7e12,
        zpl_freq: 5.45e14,
        gamma_rad: 2.2e8,
        g_spin: 2.0 * 13.996e9,
        f_orb_gs: f_gs,
        f_orb_es: f_es,
        strain_gs: s_gs,
        strain_es: s_es,
    }
}

fn hermitian(vals: &[f64]) -> Matrix4<C64> {
    let mut h = Matrix4::<C64>::zeros();
    let mut k = 0;
    for i in 0..4 {
        h[(i, i)] = C64::new(vals[k], 0.0);
        k += 1;
        for j in i + 1..4 {
            h[(i, j)] = C64::new(vals[k], vals[k + 1]);
            h[(j, i)] = h[(i, j)].conj();
            k += 2;
        }
    }
    h
}

fn max_abs(m: &Matrix4<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn random_hermitian_reconstructs(vals in prop::collection::vec(-10.0f64..10.0, 16)) {
        let h = hermitian(&vals);
        let es = eigensystem(&h).unwrap();
        let v = Matrix4::from_columns(&es.states);
        let d = Matrix4::from_diagonal(&nalgebra::Vector4::from(es.energies).map(|e| C64::new(e, 0.0)));
        let scale = max_abs(&h).max(1.0);
        prop_assert!(max_abs(&(v * d * v.adjoint() - h)) < 1e-8 * scale);
        prop_assert!(max_abs(&(v.adjoint() * v - Matrix4::identity())) < 1e-10);
        for k in 0..4 {
            let r = (h * es.states[k] - es.states[k] * C64::new(es.energies[k], 0.0)).norm();
            prop_assert!(r < 1e-8 * scale);
        }
        prop_assert!(es.energies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn kramers_degeneracy_survives_strain(
        s_gs in 0.0f64..5e12, s_es in 0.0f64..5e12, f in 0.0f64..1.0,
    ) {
        let p = params(f, f, s_gs, s_es);
        for m in [Manifold::Ground, Manifold::Excited] {
            let es = eigensystem(&build_manifold_hamiltonian(&p, m, &FieldConfig::zero()).unwrap()).unwrap();
            prop_assert!((es.energies[1] - es.energies[0]).abs() < 1e-6);
            prop_assert!((es.energies[3] - es.energies[2]).abs() < 1e-6);
        }
    }

    #[test]
    fn strengths_sum_to_two(
        b in 0.0f64..3.0, theta in 0.0f64..PI, phi in 0.0f64..TAU,
        s_es in 0.0f64..1e12, s_gs in 0.0f64..1e11, f_gs in 0.0f64..1.0, f_es in 0.0f64..1.0,
    ) {
        let p = params(f_gs, f_es, s_gs, s_es);
        let s = 1.0 / 3f64.sqrt();
        let field = FieldConfig {
            b_crystal: [b * theta.sin() * phi.cos(), b * theta.sin() * phi.sin(), b * theta.cos()],
            defect_axis: [s, s, s],
        };
        let t = transitions_at(&p, &field).unwrap();
        let sum: f64 = t.entries.iter().map(|e| e.relative_strength).sum();
        prop_assert!((sum - 2.0).abs() < 1e-10);
        for e in &t.entries {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&e.relative_strength));
        }
        prop_assert_eq!(t.zero_field.d_freq, t.zero_field.c_freq - p.delta_gs);
    }

    #[test]
    fn frame_rotation_leaves_frequencies_unchanged(
        b in 0.01f64..1.0, ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0,
        angle in 0.0f64..TAU,
    ) {
        let p = params(0.1, 0.3, 0.0, 2e11);
        let base = FieldConfig::along_001(b);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(ax, ay, az)), angle);
        let rotate = |v: [f64; 3]| -> [f64; 3] { (rot * Vector3::from(v)).into() };
        let mut axis = rotate(base.defect_axis);
        let n = Vector3::from(axis).norm();
        axis.iter_mut().for_each(|v| *v /= n);
        let rotated = FieldConfig { b_crystal: rotate(base.b_crystal), defect_axis: axis };
        let t0 = transitions_at(&p, &base).unwrap();
        let t1 = transitions_at(&p, &rotated).unwrap();
        for (a, c) in t0.entries.iter().zip(&t1.entries) {
            prop_assert!((a.frequency - c.frequency).abs() <= 1e-9 * a.frequency.abs());
        }
    }

    #[test]
    fn lower_doublet_splitting_is_linear_up_to_50_mt(
        theta in 0.0f64..PI, s_gs in 0.0f64..2e11, f in 0.0f64..1.0,
    ) {
        let p = params(f, 0.3, s_gs, 0.0);
        let s = 1.0 / 3f64.sqrt();
        let dir = [theta.sin(), 0.0, theta.cos()];
        let pts: Vec<(f64, f64)> = (0..=10)
            .map(|i| {
                let b = 0.005 * i as f64;
                let field = FieldConfig { b_crystal: dir.map(|d| d * b), defect_axis: [s, s, s] };
                (b, qubit_frequency(&p, &field).unwrap())
            })
            .collect();
        let (slope, icpt, r2) = line_fit(&pts);
        prop_assert!(r2 > 0.9999);
        let scale = slope.abs() * 0.05;
        for (b, y) in &pts {
            prop_assert!((y - slope * b - icpt).abs() <= 1e-3 * scale);
        }
    }
}

fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy * sxy / (sxx * syy))
}

#[test]
fn ground_splitting_is_linear_along_001() {
    let p = params(0.1, 0.3, 0.0, 0.0);
    let pts: Vec<(f64, f64)> = (0..=25)
        .map(|i| {
            let b = 0.002 * i as f64;
            (b, qubit_frequency(&p, &FieldConfig::along_001(b)).unwrap())
        })
        .collect();
    assert!(line_fit(&pts).2 > 0.9999);
}

#[test]
fn strain_dominated_states_have_pure_spin() {
    let p = params(0.0, 0.0, 1e15, 0.0);
    let field = FieldConfig::aligned(0.1);
    let es =
        eigensystem(&build_manifold_hamiltonian(&p, Manifold::Ground, &field).unwrap()).unwrap();
    for s in es.spin_projection {
        assert!((s.abs() - 0.5).abs() < 1e-12, "{s}");
    }
}

#[test]
fn off_axis_field_mixes_spin() {
    let p = params(0.1, 0.3, 0.0, 5e11);
    let t = transitions_at(&p, &FieldConfig::along_001(0.2)).unwrap();
    assert!(t.get(TransitionLabel::A2).relative_strength > 0.0);
    assert!(matches!(branching_ratio(&t), BranchingRatio::Finite(v) if v > 1.0));
    // spin-conserving lines dominate
    assert!(t.get(TransitionLabel::A1).relative_strength > 0.9);
}

#[test]
fn zero_field_ple_is_single_lorentzian_at_c() {
    let p = params(0.1, 0.3, 0.0, 2e11);
    let t = transitions_at(&p, &FieldConfig::zero()).unwrap();
    let c = t.zero_field.c_freq;
    let s = ple_spectrum(&t, 38e6, &[c, c + 19e6, c - 19e6], [0.5, 0.5]).unwrap();
    assert!((s[1] / s[0] - 0.5).abs() < 1e-9);
    assert!((s[2] / s[0] - 0.5).abs() < 1e-9);
}

#[test]
fn spin_conserving_peaks_separate_monotonically_with_field() {
    let p = params(0.1, 0.3, 0.0, 2e11);
    let seps: Vec<f64> = (0..=10)
        .map(|i| {
            transitions_at(&p, &FieldConfig::along_001(0.02 * i as f64))
                .unwrap()
                .spin_conserving_splitting()
        })
        .collect();
    assert!(seps.windows(2).all(|w| w[1] > w[0]));
    assert!(seps[10] > 10.0 * 38e6);
}

#[test]
fn rotation_matrix_helper_is_orthogonal() {
    // guards the test-side rotation used above
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.3);
    assert!((r.matrix() * r.matrix().transpose() - Matrix3::identity()).norm() < 1e-15);
}

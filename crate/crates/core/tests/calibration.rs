use pbv_core::calibration::*;
use pbv_core::Error;

#[test]
fn shipped_calibration_reproduces_every_target() {
    let cal = Calibration::shipped();
    cal.validate().unwrap();
    for t in standard_targets() {
        let got = t.evaluate(&cal).unwrap();
        assert!((got / t.value() - 1.0).abs() < 1e-6, "{}: {got}", t.name());
    }
}

#[test]
fn recalibrating_the_shipped_file_is_a_fixed_point() {
    let cal = Calibration::shipped();
    let r = calibrate(&cal, &standard_targets(), &standard_free_params()).unwrap();
    assert!(r.converged);
    for p in standard_free_params() {
        let (a, b) = (p.get(&cal), p.get(&r.calibration));
        assert!(
            (a - b).abs() <= 1e-6 * a.abs().max(1e-30),
            "{p}: {a} vs {b}"
        );
    }
}

#[test]
fn empty_targets_echo_the_defaults() {
    let cal = Calibration::shipped();
    let r = calibrate(&cal, &[], &[]).unwrap();
    assert_eq!(r.calibration, cal);
    assert!(r.residuals.is_empty());
}

#[test]
fn slope_target_with_both_orbital_factors() {
    let mut start = Calibration::shipped();
    start.emitter.f_orb_gs = 0.05;
    start.emitter.f_orb_es = 0.4;
    let targets = [
        Target::ZeemanSlope { value: 5.98e9 },
        Target::QubitFrequency { value: 4.24e9 },
    ];
    let r = calibrate(&start, &targets, &[FreeParam::FOrbGs, FreeParam::FOrbEs]).unwrap();
    assert!(r.residuals[0].relative_residual.abs() < 0.005);
    // slope alone cannot separate the two factors
    assert!(matches!(
        calibrate(
            &start,
            &targets[..1],
            &[FreeParam::FOrbGs, FreeParam::FOrbEs]
        ),
        Err(Error::RankDeficient(_))
    ));
}

#[test]
fn branching_ratio_from_excited_strain() {
    let mut start = Calibration::shipped();
    start.emitter.strain_es *= 1.3;
    let r = calibrate(
        &start,
        &[Target::BranchingRatio { value: 87.0 }],
        &[FreeParam::StrainEs],
    )
    .unwrap();
    assert!(r.residuals[0].relative_residual.abs() < 0.01);
}

#[test]
fn unconstrained_parameter_is_rejected() {
    let cal = Calibration::shipped();
    let err = calibrate(
        &cal,
        &[
            Target::SaturationPower { value: 3.1e-9 },
            Target::T2Star { value: 354e-9 },
        ],
        &[FreeParam::PSat, FreeParam::DetectedRate],
    )
    .unwrap_err();
    match err {
        Error::RankDeficient(msg) => assert!(msg.contains("detected_rate"), "{msg}"),
        e => panic!("{e}"),
    }
}

#[test]
fn derived_readout_quantities_are_physical() {
    let cal = Calibration::shipped();
    let eff = cal.detection_efficiency().unwrap();
    assert!(eff > 0.0 && eff < 1.0);
    let p = cal.readout_power().unwrap();
    assert!(p > 0.0 && p < cal.optics.p_sat);
    let m = cal.rate_model(7.5).unwrap();
    assert!((1.0 / (m.gamma_flip_up + m.gamma_flip_down) - 12e-3).abs() < 1e-9);
}

#[test]
fn calibration_json_round_trips_and_rejects_unknown_keys() {
    let cal = Calibration::shipped();
    let text = serde_json::to_string(&cal).unwrap();
    assert_eq!(Calibration::from_json(&text).unwrap(), cal);
    let bad = text.replacen("\"optics\":{", "\"optics\":{\"psat\":1.0,", 1);
    assert!(Calibration::from_json(&bad).is_err());
}

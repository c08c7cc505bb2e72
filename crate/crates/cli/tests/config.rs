use std::path::PathBuf;

use pbv_cli::config::{CptSweep, PleSweep, Source, SsrSweep, Sweep, T1Sweep};
use pbv_cli::{load_config, parse_config, CliError, Experiment, RunConfig};
use pbv_core::calibration::Calibration;
use proptest::prelude::*;

fn config_path(e: CliError) -> String {
    match e {
        CliError::Config { path, .. } => path,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn minimal_ple_config_uses_38_mhz_linewidth() {
    let cfg = parse_config(r#"{"experiment": "ple"}"#).unwrap();
    assert_eq!(cfg.experiment, Experiment::Ple);
    assert_eq!(cfg, RunConfig::default_for(Experiment::Ple));
    let Sweep::Ple(s) = &cfg.sweep else {
        panic!("ple sweep")
    };
    let lw = s
        .linewidth
        .unwrap_or(cfg.resolve_calibration().unwrap().optics.ple_linewidth);
    assert_eq!(lw, 38e6);
    assert_eq!(s.fields.len(), 11);
    assert_eq!(cfg.output_dir, PathBuf::from("pbv-out/ple"));
}

#[test]
fn unknown_top_level_key_is_named() {
    let e = parse_config(r#"{"experimnt": "ple"}"#).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("experimnt"), "{msg}");
}

#[test]
fn unknown_sweep_key_is_path_qualified() {
    let e = parse_config(r#"{"experiment": "t1", "sweep": {"delay": [0.0]}}"#).unwrap_err();
    assert_eq!(config_path(e), "sweep.delay");
}

#[test]
fn wrong_type_is_path_qualified() {
    let e =
        parse_config(r#"{"experiment": "cpt", "sweep": {"powers": [1e-12, "x"]}}"#).unwrap_err();
    assert_eq!(config_path(e), "sweep.powers[1]");
}

#[test]
fn unknown_experiment_rejected() {
    let e = parse_config(r#"{"experiment": "odmr"}"#).unwrap_err();
    assert!(matches!(e, CliError::Config { .. }));
    assert!(e.to_string().contains("odmr"));
}

#[test]
fn missing_experiment_rejected() {
    let e = parse_config(r#"{"seed": 3}"#).unwrap_err();
    assert!(e.to_string().contains("experiment"), "{e}");
}

#[test]
fn malformed_json_rejected() {
    assert!(matches!(
        parse_config(r#"{"experiment": "ple""#),
        Err(CliError::Config { .. })
    ));
}

#[test]
fn ssr_without_seed_rejected() {
    let e = parse_config(r#"{"experiment": "ssr"}"#).unwrap_err();
    assert!(matches!(e, CliError::MissingSeed { .. }), "{e}");
    assert!(parse_config(r#"{"experiment": "ssr", "seed": 1}"#).is_ok());
}

#[test]
fn noisy_sweeps_need_a_seed_and_noiseless_ones_do_not() {
    assert!(matches!(
        parse_config(r#"{"experiment": "t1"}"#),
        Err(CliError::MissingSeed { .. })
    ));
    assert!(parse_config(r#"{"experiment": "t1", "sweep": {"rate_noise": 0}}"#).is_ok());
    assert!(matches!(
        parse_config(r#"{"experiment": "saturation"}"#),
        Err(CliError::MissingSeed { .. })
    ));
    for e in ["ple", "init", "cpt", "calibrate"] {
        assert!(
            parse_config(&format!(r#"{{"experiment": "{e}"}}"#)).is_ok(),
            "{e}"
        );
    }
}

#[test]
fn empty_sweeps_rejected() {
    let e = parse_config(r#"{"experiment": "ple", "sweep": {"fields": []}}"#).unwrap_err();
    assert_eq!(config_path(e), "sweep.fields");
    let e =
        parse_config(r#"{"experiment": "cpt", "sweep": {"powers": [1e-12, -1e-12]}}"#).unwrap_err();
    assert_eq!(config_path(e), "sweep.powers[1]");
}

#[test]
fn defaults_round_trip_for_every_experiment() {
    for exp in Experiment::ALL {
        let mut cfg = RunConfig::default_for(exp);
        cfg.seed = Some(11);
        let back = parse_config(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg, "{exp}");
    }
}

#[test]
fn inline_calibration_round_trips() {
    let mut cfg = RunConfig::default_for(Experiment::Init);
    cfg.calibration = Some(Source::Inline(Calibration::shipped()));
    assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
}

#[test]
fn relative_calibration_path_resolves_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut cal = Calibration::shipped();
    cal.optics.ple_linewidth = 50e6;
    std::fs::write(
        dir.path().join("cal.json"),
        serde_json::to_string(&cal).unwrap(),
    )
    .unwrap();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(
        &cfg_path,
        r#"{"experiment": "ple", "calibration": "cal.json"}"#,
    )
    .unwrap();
    let cfg = load_config(&cfg_path).unwrap();
    assert_eq!(
        cfg.resolve_calibration().unwrap().optics.ple_linewidth,
        50e6
    );
}

#[test]
fn bad_calibration_file_reports_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cal.json");
    std::fs::write(&p, r#"{"emitter": 3}"#).unwrap();
    let cfg = parse_config(&format!(
        r#"{{"experiment": "ple", "calibration": {}}}"#,
        serde_json::to_string(&p).unwrap()
    ))
    .unwrap();
    let msg = cfg.resolve_calibration().unwrap_err().to_string();
    assert!(msg.contains("cal.json") && msg.contains("emitter"), "{msg}");
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![1e-15..1e-6f64, 1e-3..1e3f64, 1e6..1e15f64]
}

fn sweep() -> impl Strategy<Value = (Experiment, Sweep)> {
    prop_oneof![
        (
            prop::collection::vec(0.0..1.0f64, 1..12),
            prop::array::uniform3(0.1..1.0f64),
            2usize..3000
        )
            .prop_map(|(fields, direction, n_points)| (
                Experiment::Ple,
                Sweep::Ple(PleSweep {
                    fields,
                    direction,
                    n_points,
                    ..PleSweep::default()
                })
            )),
        (
            prop::collection::vec(finite(), 1..30),
            proptest::option::of(1.0..20.0f64),
            0.0..0.2f64
        )
            .prop_map(|(delays, temperature, rate_noise)| (
                Experiment::T1,
                Sweep::T1(T1Sweep {
                    delays,
                    temperature,
                    rate_noise,
                    ..T1Sweep::default()
                })
            )),
        (1usize..1_000_000, 0u32..50).prop_map(|(n_repeats, threshold)| (
            Experiment::Ssr,
            Sweep::Ssr(SsrSweep {
                n_repeats,
                threshold
            })
        )),
        (
            prop::collection::vec(finite(), 1..10),
            1.0..10.0f64,
            5usize..500
        )
            .prop_map(|(powers, half_span_widths, n_points)| (
                Experiment::Cpt,
                Sweep::Cpt(CptSweep {
                    powers,
                    half_span_widths,
                    n_points
                })
            )),
    ]
}

proptest! {
    #[test]
    fn parsed_configs_round_trip((experiment, sweep) in sweep(), seed in any::<u64>(), dir in "[a-z]{1,8}(/[a-z]{1,8}){0,2}") {
        let cfg = RunConfig {
            experiment,
            calibration: None,
            emitter: None,
            sweep,
            seed: Some(seed),
            output_dir: PathBuf::from(dir),
        };
        let once = parse_config(&cfg.to_json()).unwrap();
        prop_assert_eq!(&once, &cfg);
        prop_assert_eq!(parse_config(&once.to_json()).unwrap(), cfg);
    }
}

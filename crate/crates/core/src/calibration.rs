//! Calibration document and the least-squares procedure that binds measured
//! observables to model parameters.
//!
//! A [`Calibration`] holds everything the simulators need. [`calibrate`]
//! adjusts a chosen set of [`FreeParam`]s so that the model reproduces a set
//! of [`Target`] observables, using the fitting engine on relative residuals.
//!
//! Identifiability table (target → parameters it responds to):
//!
//! | target              | free parameters                                          |
//! |---------------------|----------------------------------------------------------|
//! | `zeeman_slope`      | f_orb_gs, f_orb_es, strain_gs, strain_es, delta_es, g_spin |
//! | `qubit_frequency`   | f_orb_gs, strain_gs, g_spin                              |
//! | `branching_ratio`   | f_orb_gs, f_orb_es, strain_gs, strain_es, delta_es, g_spin |
//! | `saturation_power`  | p_sat                                                    |
//! | `init_fidelity`     | init_power, p_sat, a_orbach, a_raman, emitter parameters |
//! | `t1`                | a_orbach, a_raman                                        |
//! | `orbach_only_alpha` | a_orbach, a_raman (their ratio)                          |
//! | `ssr_mean_readout`  | detected_rate, flip_rate_readout, background_rate        |
//! | `ssr_mean_dark`     | detected_rate, flip_rate_readout, background_rate        |
//! | `ssr_fidelity`      | detected_rate, flip_rate_readout, background_rate        |
//! | `t2_star`           | gamma_dephasing, a_orbach, a_raman                       |
//!
//! A combination is accepted only if the scaled Jacobian at the starting
//! point has full column rank.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cpt::{intrinsic_fwhm, LambdaSystem, RabiCalibration};
use crate::dynamics::{
    spin_flip_rate, stationary_state, thermal_flip_rates, PulseTarget, RateModel, TemperatureModel,
    G_DOWN,
};
use crate::emitter::{
    branching_ratio, qubit_frequency, transitions_at, EmitterParams, FieldConfig,
};
use crate::error::{Error, Result};
use crate::fitting::{
    fit, fit_with, forward_jacobian, profile_initializer, Bounds, FitOptions, FnModel, ModelSpec,
};
use crate::photon_stats::{ssr_observables, SsrConfig};

const SHIPPED: &str = include_str!("../data/calibration.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsCalibration {
    /// Saturation power of the spin-conserving lines, W.
    pub p_sat: f64,
    /// PLE linewidth, Hz.
    pub ple_linewidth: f64,
    /// B2 power used for initialization, W.
    pub init_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureCalibration {
    pub model: TemperatureModel,
    /// Temperature of the initialization, readout and T1 experiments, K.
    pub operating_temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsrCalibration {
    /// Detected photon rate in the bright state, 1/s.
    pub detected_rate: f64,
    /// 1/s.
    pub flip_rate_readout: f64,
    /// 1/s.
    pub background_rate: f64,
    /// s.
    pub init_duration: f64,
    /// s.
    pub readout_duration: f64,
    /// s.
    pub dark_duration: f64,
    /// s.
    pub gaps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptCalibration {
    /// Pure spin dephasing rate, 1/s.
    pub gamma_dephasing: f64,
    /// K.
    pub temperature: f64,
    pub pump_fraction: f64,
    /// rad/s.
    pub delta_pump: f64,
}

/// Everything the simulators need, as shipped in `data/calibration.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub emitter: EmitterParams,
    /// Operating field of the time-resolved experiments.
    pub field: FieldConfig,
    pub optics: OpticsCalibration,
    pub temperature: TemperatureCalibration,
    pub ssr: SsrCalibration,
    pub cpt: CptCalibration,
    /// Inputs not constrained by any measurement, listed for reports.
    #[serde(default)]
    pub placeholders: Vec<String>,
}

impl Calibration {
    /// The calibration shipped with the crate.
    pub fn shipped() -> Calibration {
        serde_json::from_str(SHIPPED).expect("shipped calibration is valid")
    }

    pub fn from_json(text: &str) -> Result<Calibration> {
        let c: Calibration = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.emitter.validate()?;
        self.temperature.model.validate()?;
        let positive = [
            ("optics.p_sat", self.optics.p_sat),
            ("optics.ple_linewidth", self.optics.ple_linewidth),
            ("optics.init_power", self.optics.init_power),
            (
                "temperature.operating_temperature",
                self.temperature.operating_temperature,
            ),
            ("ssr.readout_duration", self.ssr.readout_duration),
            ("ssr.dark_duration", self.ssr.dark_duration),
            ("ssr.init_duration", self.ssr.init_duration),
            ("ssr.gaps", self.ssr.gaps),
            ("cpt.temperature", self.cpt.temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("ssr.detected_rate", self.ssr.detected_rate),
            ("ssr.flip_rate_readout", self.ssr.flip_rate_readout),
            ("ssr.background_rate", self.ssr.background_rate),
            ("cpt.gamma_dephasing", self.cpt.gamma_dephasing),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.cpt.pump_fraction) {
            return Err(Error::invalid("cpt.pump_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn qubit_frequency(&self) -> Result<f64> {
        qubit_frequency(&self.emitter, &self.field)
    }

    /// Branching ratio at the operating field; infinite when fully cycling.
    pub fn eta(&self) -> Result<f64> {
        Ok(branching_ratio(&transitions_at(&self.emitter, &self.field)?).value())
    }

    /// Total ground spin-flip rate `1/T1` at `temperature`.
    pub fn spin_flip_rate(&self, temperature: f64) -> f64 {
        spin_flip_rate(temperature, &self.temperature.model)
    }

    /// Optical scattering rate during readout: each scattered photon flips
    /// the spin with probability `1/(η+1)`.
    pub fn readout_scattering_rate(&self) -> Result<f64> {
        Ok(self.ssr.flip_rate_readout * (self.eta()? + 1.0))
    }

    /// Detected over scattered photons during readout.
    pub fn detection_efficiency(&self) -> Result<f64> {
        let s = self.readout_scattering_rate()?;
        Ok(if s > 0.0 {
            (self.ssr.detected_rate / s).min(1.0)
        } else {
            0.0
        })
    }

    /// Power on A1 giving the readout scattering rate, W.
    pub fn readout_power(&self) -> Result<f64> {
        let s = self.readout_scattering_rate()?;
        let half = 0.5 * self.emitter.gamma_rad;
        if s >= half {
            return Err(Error::Calibration(format!(
                "readout scattering rate {s:.4e}/s exceeds the saturation limit Γ/2"
            )));
        }
        Ok(self.optics.p_sat * s / (half - s))
    }

    /// Rate model at `temperature` and the operating field.
    pub fn rate_model(&self, temperature: f64) -> Result<RateModel> {
        let (up, down) = thermal_flip_rates(
            self.spin_flip_rate(temperature),
            self.qubit_frequency()?,
            temperature,
        );
        Ok(RateModel {
            gamma_rad: self.emitter.gamma_rad,
            eta: self.eta()?,
            p_sat: self.optics.p_sat,
            gamma_flip_up: up,
            gamma_flip_down: down,
            detection_efficiency: self.detection_efficiency()?,
        })
    }

    pub fn ssr_config(&self, n_repeats: usize, rng_seed: u64) -> SsrConfig {
        SsrConfig {
            init_duration: self.ssr.init_duration,
            readout_duration: self.ssr.readout_duration,
            dark_duration: self.ssr.dark_duration,
            gaps: self.ssr.gaps,
            n_repeats,
            detected_rate: self.ssr.detected_rate,
            flip_rate_readout: self.ssr.flip_rate_readout,
            background_rate: self.ssr.background_rate,
            rng_seed,
        }
    }

    pub fn rabi(&self) -> RabiCalibration {
        RabiCalibration {
            p_sat: self.optics.p_sat,
            gamma_rad: self.emitter.gamma_rad,
            pump_fraction: self.cpt.pump_fraction,
        }
    }

    /// Undriven Λ system at two-photon resonance; drive it with
    /// [`RabiCalibration::split`].
    pub fn lambda_system(&self) -> Result<LambdaSystem> {
        let eta = self.eta()?;
        let (down, up) = if eta.is_infinite() {
            (0.0, 1.0)
        } else {
            (1.0 / (eta + 1.0), eta / (eta + 1.0))
        };
        let q = self.qubit_frequency()?;
        Ok(LambdaSystem {
            omega_pump: 0.0,
            omega_probe: 0.0,
            delta_pump: self.cpt.delta_pump,
            raman_offset: q,
            qubit_freq: q,
            gamma_rad: self.emitter.gamma_rad,
            branch_down: down,
            branch_up: up,
            gamma_dephasing: self.cpt.gamma_dephasing,
            gamma_spin: self.spin_flip_rate(self.cpt.temperature),
        })
    }
}

/// Observables that [`calibrate`] can match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// Slope of the spin-conserving splitting over 0–200 mT along the
    /// operating field direction, Hz/T.
    ZeemanSlope {
        value: f64,
    },
    /// Ground qubit splitting at the operating field, Hz.
    QubitFrequency {
        value: f64,
    },
    /// η at the operating field.
    BranchingRatio {
        value: f64,
    },
    /// W.
    SaturationPower {
        value: f64,
    },
    /// Steady-state `g↓` population under B2 at `optics.init_power`.
    InitFidelity {
        value: f64,
    },
    /// `1/spin_flip_rate` at `temperature`, s.
    T1 {
        value: f64,
        temperature: f64,
    },
    /// α from an Orbach-only fit to the model's 6–14 K relaxation rates.
    OrbachOnlyAlpha {
        value: f64,
    },
    SsrMeanReadout {
        value: f64,
    },
    SsrMeanDark {
        value: f64,
    },
    /// Threshold-1 single-shot fidelity.
    SsrFidelity {
        value: f64,
    },
    /// `1/(π·FWHM)` of the weak-drive CPT dip, s.
    T2Star {
        value: f64,
    },
}

impl Target {
    pub fn value(&self) -> f64 {
        match *self {
            Target::ZeemanSlope { value }
            | Target::QubitFrequency { value }
            | Target::BranchingRatio { value }
            | Target::SaturationPower { value }
            | Target::InitFidelity { value }
            | Target::T1 { value, .. }
            | Target::OrbachOnlyAlpha { value }
            | Target::SsrMeanReadout { value }
            | Target::SsrMeanDark { value }
            | Target::SsrFidelity { value }
            | Target::T2Star { value } => value,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::ZeemanSlope { .. } => "zeeman_slope",
            Target::QubitFrequency { .. } => "qubit_frequency",
            Target::BranchingRatio { .. } => "branching_ratio",
            Target::SaturationPower { .. } => "saturation_power",
            Target::InitFidelity { .. } => "init_fidelity",
            Target::T1 { .. } => "t1",
            Target::OrbachOnlyAlpha { .. } => "orbach_only_alpha",
            Target::SsrMeanReadout { .. } => "ssr_mean_readout",
            Target::SsrMeanDark { .. } => "ssr_mean_dark",
            Target::SsrFidelity { .. } => "ssr_fidelity",
            Target::T2Star { .. } => "t2_star",
        }
    }

    /// Model value of this observable under `cal`.
    pub fn evaluate(&self, cal: &Calibration) -> Result<f64> {
        match *self {
            Target::ZeemanSlope { .. } => zeeman_slope(cal),
            Target::QubitFrequency { .. } => cal.qubit_frequency(),
            Target::BranchingRatio { .. } => cal.eta(),
            Target::SaturationPower { .. } => Ok(cal.optics.p_sat),
            Target::InitFidelity { .. } => init_fidelity(cal),
            Target::T1 { temperature, .. } => Ok(1.0 / cal.spin_flip_rate(temperature)),
            Target::OrbachOnlyAlpha { .. } => orbach_only_alpha(cal, &[]),
            Target::SsrMeanReadout { .. } => Ok(ssr_model(cal).mean_readout),
            Target::SsrMeanDark { .. } => Ok(ssr_model(cal).mean_dark),
            Target::SsrFidelity { .. } => Ok(ssr_model(cal).f_ssr_threshold_1),
            Target::T2Star { .. } => {
                let fwhm = intrinsic_fwhm(&cal.lambda_system()?);
                Ok(1.0 / (std::f64::consts::PI * fwhm))
            }
        }
    }
}

/// Fields along the operating direction used by the Zeeman-slope target, T.
pub fn zeeman_sweep() -> Vec<f64> {
    (0..=10).map(|i| 0.02 * i as f64).collect()
}

/// Temperatures of the relaxation series, K.
pub fn relaxation_temperatures() -> Vec<f64> {
    (6..=14).map(f64::from).collect()
}

fn zeeman_slope(cal: &Calibration) -> Result<f64> {
    let dir = cal.field.b_crystal;
    let norm = cal.field.magnitude();
    if norm == 0.0 {
        return Err(Error::Calibration(
            "operating field has no direction".into(),
        ));
    }
    let mut pts = Vec::new();
    for b in zeeman_sweep() {
        let field = FieldConfig {
            b_crystal: dir.map(|c| c / norm * b),
            defect_axis: cal.field.defect_axis,
        };
        pts.push((
            b,
            transitions_at(&cal.emitter, &field)?.spin_conserving_splitting(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn init_fidelity(cal: &Calibration) -> Result<f64> {
    let model = cal.rate_model(cal.temperature.operating_temperature)?;
    let m = model.generator(PulseTarget::B2, cal.optics.init_power);
    let p = stationary_state(&m)
        .ok_or_else(|| Error::Calibration("initialization steady state is not unique".into()))?;
    Ok(p[G_DOWN])
}

fn ssr_model(cal: &Calibration) -> crate::photon_stats::SsrObservables {
    ssr_observables(
        cal.ssr.detected_rate,
        cal.ssr.flip_rate_readout,
        cal.ssr.readout_duration,
        cal.ssr.dark_duration,
        cal.ssr.background_rate,
    )
}

/// α of an Orbach-only fit (weights `1/y²`) to the model's relaxation rates
/// over [`relaxation_temperatures`]. `noise` multiplies each rate by
/// `1 + noise[i]` when nonempty.
pub fn orbach_only_alpha(cal: &Calibration, noise: &[f64]) -> Result<f64> {
    let x = relaxation_temperatures();
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &t)| cal.spin_flip_rate(t) * (1.0 + noise.get(i).copied().unwrap_or(0.0)))
        .collect();
    let w: Vec<f64> = y.iter().map(|v| 1.0 / (v * v)).collect();
    let spec = ModelSpec::Orbach {
        delta_gs: cal.temperature.model.delta_gs,
    };
    let init = profile_initializer(&spec, &x, &y)?;
    Ok(fit(&spec, &x, &y, &w, &init)?.params[1])
}

/// Calibration inputs that [`calibrate`] may adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    FOrbGs,
    FOrbEs,
    StrainGs,
    StrainEs,
    DeltaEs,
    GSpin,
    PSat,
    InitPower,
    AOrbach,
    ARaman,
    DetectedRate,
    FlipRateReadout,
    BackgroundRate,
    GammaDephasing,
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(s.trim_matches('"'))
    }
}

impl FreeParam {
    pub fn get(&self, c: &Calibration) -> f64 {
        match self {
            FreeParam::FOrbGs => c.emitter.f_orb_gs,
            FreeParam::FOrbEs => c.emitter.f_orb_es,
            FreeParam::StrainGs => c.emitter.strain_gs,
            FreeParam::StrainEs => c.emitter.strain_es,
            FreeParam::DeltaEs => c.emitter.delta_es,
            FreeParam::GSpin => c.emitter.g_spin,
            FreeParam::PSat => c.optics.p_sat,
            FreeParam::InitPower => c.optics.init_power,
            FreeParam::AOrbach => c.temperature.model.a_orbach,
            FreeParam::ARaman => c.temperature.model.a_raman,
            FreeParam::DetectedRate => c.ssr.detected_rate,
            FreeParam::FlipRateReadout => c.ssr.flip_rate_readout,
            FreeParam::BackgroundRate => c.ssr.background_rate,
            FreeParam::GammaDephasing => c.cpt.gamma_dephasing,
        }
    }

    pub fn set(&self, c: &mut Calibration, v: f64) {
        let slot = match self {
            FreeParam::FOrbGs => &mut c.emitter.f_orb_gs,
            FreeParam::FOrbEs => &mut c.emitter.f_orb_es,
            FreeParam::StrainGs => &mut c.emitter.strain_gs,
            FreeParam::StrainEs => &mut c.emitter.strain_es,
            FreeParam::DeltaEs => &mut c.emitter.delta_es,
            FreeParam::GSpin => &mut c.emitter.g_spin,
            FreeParam::PSat => &mut c.optics.p_sat,
            FreeParam::InitPower => &mut c.optics.init_power,
            FreeParam::AOrbach => &mut c.temperature.model.a_orbach,
            FreeParam::ARaman => &mut c.temperature.model.a_raman,
            FreeParam::DetectedRate => &mut c.ssr.detected_rate,
            FreeParam::FlipRateReadout => &mut c.ssr.flip_rate_readout,
            FreeParam::BackgroundRate => &mut c.ssr.background_rate,
            FreeParam::GammaDephasing => &mut c.cpt.gamma_dephasing,
        };
        *slot = v;
    }

    pub fn bounds(&self) -> Bounds {
        match self {
            FreeParam::FOrbGs | FreeParam::FOrbEs => Bounds::new(0.0, 1.0),
            FreeParam::DeltaEs | FreeParam::GSpin | FreeParam::PSat | FreeParam::InitPower => {
                Bounds::POSITIVE
            }
            _ => Bounds::NONNEGATIVE,
        }
    }
}

/// Targets and free parameters behind the shipped calibration.
pub fn standard_targets() -> Vec<Target> {
    vec![
        Target::ZeemanSlope { value: 5.98e9 },
        Target::QubitFrequency { value: 4.24e9 },
        Target::BranchingRatio { value: 87.0 },
        Target::SaturationPower { value: 3.1e-9 },
        Target::T1 {
            value: 12e-3,
            temperature: 7.5,
        },
        Target::OrbachOnlyAlpha { value: 0.5 },
        Target::InitFidelity { value: 0.987 },
        Target::SsrMeanReadout { value: 4.83 },
        Target::SsrMeanDark { value: 0.64 },
        Target::SsrFidelity { value: 0.76 },
        Target::T2Star { value: 354e-9 },
    ]
}

pub fn standard_free_params() -> Vec<FreeParam> {
    use FreeParam::*;
    vec![
        FOrbGs,
        FOrbEs,
        StrainEs,
        PSat,
        AOrbach,
        ARaman,
        InitPower,
        DetectedRate,
        FlipRateReadout,
        BackgroundRate,
        GammaDephasing,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResidual {
    pub target: Target,
    pub name: String,
    pub achieved: f64,
    /// `achieved / target − 1`.
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub calibration: Calibration,
    pub free_params: Vec<FreeParam>,
    pub residuals: Vec<TargetResidual>,
    pub converged: bool,
    pub n_iterations: usize,
}

fn with_params(base: &Calibration, free: &[FreeParam], theta: &[f64]) -> Calibration {
    let mut c = base.clone();
    for (p, v) in free.iter().zip(theta) {
        p.set(&mut c, *v);
    }
    c
}

fn residuals(cal: &Calibration, targets: &[Target]) -> Result<Vec<TargetResidual>> {
    targets
        .iter()
        .map(|t| {
            let achieved = t.evaluate(cal)?;
            Ok(TargetResidual {
                target: *t,
                name: t.name().to_string(),
                achieved,
                relative_residual: achieved / t.value() - 1.0,
            })
        })
        .collect()
}

/// Adjusts `free_params` of `base` so the model reproduces `targets`
/// (relative least squares). Empty targets and free parameters return
/// `base` unchanged with its residuals.
pub fn calibrate(
    base: &Calibration,
    targets: &[Target],
    free_params: &[FreeParam],
) -> Result<CalibrationReport> {
    base.validate()?;
    for t in targets {
        if !(t.value().is_finite() && t.value() != 0.0) {
            return Err(Error::Calibration(format!(
                "{} target must be finite and nonzero",
                t.name()
            )));
        }
    }
    for (i, p) in free_params.iter().enumerate() {
        if free_params[..i].contains(p) {
            return Err(Error::Calibration(format!(
                "free parameter {p} listed twice"
            )));
        }
    }
    if free_params.is_empty() {
        return Ok(CalibrationReport {
            calibration: base.clone(),
            free_params: vec![],
            residuals: residuals(base, targets)?,
            converged: true,
            n_iterations: 0,
        });
    }
    if free_params.len() > targets.len() {
        return Err(Error::RankDeficient(format!(
            "{} free parameters but only {} targets",
            free_params.len(),
            targets.len()
        )));
    }

    let theta0: Vec<f64> = free_params.iter().map(|p| p.get(base)).collect();
    let model = FnModel {
        name: "calibration".to_string(),
        bounds: free_params.iter().map(FreeParam::bounds).collect(),
        f: |theta: &[f64], x: f64| {
            let t = &targets[x as usize];
            t.evaluate(&with_params(base, free_params, theta))
                .map(|v| v / t.value())
                .unwrap_or(f64::NAN)
        },
    };
    let x: Vec<f64> = (0..targets.len()).map(|i| i as f64).collect();
    let ones = vec![1.0; targets.len()];

    check_identifiable(&model, &theta0, &x, free_params)?;

    let opts = FitOptions {
        max_iterations: 200,
        ..FitOptions::default()
    };
    let result = fit_with(&model, &x, &ones, &ones, &theta0, &opts)?;
    let calibration = with_params(base, free_params, &result.params);
    calibration.validate()?;
    Ok(CalibrationReport {
        residuals: residuals(&calibration, targets)?,
        calibration,
        free_params: free_params.to_vec(),
        converged: result.converged,
        n_iterations: result.n_iterations,
    })
}

fn check_identifiable<F>(
    model: &FnModel<F>,
    theta0: &[f64],
    x: &[f64],
    free: &[FreeParam],
) -> Result<()>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    let j = forward_jacobian(model, theta0, x, 1e-6);
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::Calibration(
            "model observables are not finite at the starting point".into(),
        ));
    }
    // scale columns to relative parameter changes so units do not matter
    let scaled = DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| {
        j[(r, c)]
            * if theta0[c] != 0.0 {
                theta0[c].abs()
            } else {
                1.0
            }
    });
    let dead: Vec<String> = (0..free.len())
        .filter(|&c| scaled.column(c).iter().all(|v| *v == 0.0))
        .map(|c| free[c].to_string())
        .collect();
    if !dead.is_empty() {
        return Err(Error::RankDeficient(format!(
            "no target responds to {}",
            dead.join(", ")
        )));
    }
    let sv = scaled.clone().svd(false, true);
    let smax = sv.singular_values.max();
    let tol = 1e-9 * smax;
    let v_t = sv.v_t.expect("requested V");
    for (i, s) in sv.singular_values.iter().enumerate() {
        if *s <= tol {
            let combo: Vec<String> = free
                .iter()
                .zip(v_t.row(i).iter())
                .filter(|(_, w)| w.abs() > 1e-3)
                .map(|(p, w)| format!("{w:+.3}·{p}"))
                .collect();
            return Err(Error::RankDeficient(format!(
                "rank {} < {}: the combination {} is not constrained by the targets",
                sv.singular_values.iter().filter(|s| **s > tol).count(),
                free.len(),
                combo.join(" ")
            )));
        }
    }
    Ok(())
}

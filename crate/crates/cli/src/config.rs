//! Run configuration: one JSON document per experiment run.
//!
//! ```json
//! {
//!   "experiment": "t1",
//!   "calibration": "my_calibration.json",
//!   "sweep": { "temperature": 7.5 },
//!   "seed": 7,
//!   "output_dir": "out/t1"
//! }
//! ```
//!
//! `calibration` and `emitter` accept an inline object or a path; relative
//! paths are resolved against the config file's directory. Every sweep
//! field has a default, so `{"experiment": "ple"}` is a complete config.

use std::fmt;
use std::path::{Path, PathBuf};

use pbv_core::calibration::{
    standard_free_params, standard_targets, Calibration, FreeParam, Target,
};
use pbv_core::emitter::EmitterParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Ple,
    Init,
    Saturation,
    Ssr,
    T1,
    Cpt,
    Calibrate,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Ple,
        Experiment::Init,
        Experiment::Saturation,
        Experiment::Ssr,
        Experiment::T1,
        Experiment::Cpt,
        Experiment::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ple => "ple",
            Experiment::Init => "init",
            Experiment::Saturation => "saturation",
            Experiment::Ssr => "ssr",
            Experiment::T1 => "t1",
            Experiment::Cpt => "cpt",
            Experiment::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inline value or a path to a JSON file holding it.
#[derive(Debug, Clone, PartialEq)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: Serialize> Serialize for Source<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Source::Path(p) => p.serialize(s),
            Source::Inline(v) => v.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Source<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(p) => Ok(Source::Path(PathBuf::from(p))),
            v => serde_json::from_value(v)
                .map(Source::Inline)
                .map_err(serde::de::Error::custom),
        }
    }
}

impl<T: DeserializeOwned + Clone> Source<T> {
    pub fn load(&self) -> Result<T> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                serde_path_to_error::deserialize(de).map_err(|e| {
                    CliError::config(
                        format!("{}:{}", p.display(), e.path()),
                        e.into_inner().to_string(),
                    )
                })
            }
        }
    }

    fn rebase(&mut self, base: &Path) {
        if let Source::Path(p) = self {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

fn zero_to_02_tesla() -> Vec<f64> {
    (0..=10).map(|i| 0.02 * i as f64).collect()
}

/// PLE spectra over a field sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PleSweep {
    /// Field magnitudes, T.
    pub fields: Vec<f64>,
    /// Field direction in the crystal frame (normalized on use).
    pub direction: [f64; 3],
    /// Half-width of the laser scan around the zero-field C line, Hz.
    pub half_span: f64,
    pub n_points: usize,
    /// Linewidth override, Hz; the calibration's PLE linewidth when absent.
    pub linewidth: Option<f64>,
    /// Ground-sublevel weights `[|1⟩, |2⟩]`.
    pub populations: [f64; 2],
}

impl Default for PleSweep {
    fn default() -> Self {
        PleSweep {
            fields: zero_to_02_tesla(),
            direction: [0.0, 0.0, 1.0],
            half_span: 1.5e9,
            n_points: 1501,
            linewidth: None,
            populations: [0.5, 0.5],
        }
    }
}

/// Fluorescence transient under B2 from a balanced start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSweep {
    /// W; the calibrated initialization power when absent.
    pub power: Option<f64>,
    /// s.
    pub duration: f64,
    /// s.
    pub bin_width: f64,
    /// K; the operating temperature when absent.
    pub temperature: Option<f64>,
}

impl Default for InitSweep {
    fn default() -> Self {
        InitSweep {
            power: None,
            duration: 3e-3,
            bin_width: 5e-6,
            temperature: None,
        }
    }
}

/// Initialization rate versus B2 power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationSweep {
    /// W.
    pub powers: Vec<f64>,
    /// Relative Gaussian noise on each rate.
    pub noise: f64,
}

impl Default for SaturationSweep {
    fn default() -> Self {
        SaturationSweep {
            // 0.2 to 30 nW, log spaced
            powers: (0..20)
                .map(|i| 0.2e-9 * 150f64.powf(i as f64 / 19.0))
                .collect(),
            noise: 0.03,
        }
    }
}

/// Single-shot readout histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsrSweep {
    pub n_repeats: usize,
    pub threshold: u32,
}

impl Default for SsrSweep {
    fn default() -> Self {
        SsrSweep {
            n_repeats: 10_000,
            threshold: 1,
        }
    }
}

/// T1 recovery curve plus the relaxation rate versus temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T1Sweep {
    /// s.
    pub delays: Vec<f64>,
    /// K; the operating temperature when absent.
    pub temperature: Option<f64>,
    /// K.
    pub temperatures: Vec<f64>,
    /// Relative Gaussian noise on the temperature series.
    pub rate_noise: f64,
}

impl Default for T1Sweep {
    fn default() -> Self {
        T1Sweep {
            delays: (0..=40).map(|i| 1.5e-3 * i as f64).collect(),
            temperature: None,
            temperatures: (6..=14).map(f64::from).collect(),
            rate_noise: 0.05,
        }
    }
}

/// CPT spectra and dip width versus total laser power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CptSweep {
    /// Total incident power, W.
    pub powers: Vec<f64>,
    /// Scan half-width in units of the estimated dip width.
    pub half_span_widths: f64,
    pub n_points: usize,
}

impl Default for CptSweep {
    fn default() -> Self {
        CptSweep {
            powers: [5.0, 10.0, 20.0, 40.0, 80.0]
                .iter()
                .map(|p| p * 1e-12)
                .collect(),
            half_span_widths: 4.0,
            n_points: 161,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSweep {
    pub targets: Vec<Target>,
    pub free_params: Vec<FreeParam>,
}

impl Default for CalibrateSweep {
    fn default() -> Self {
        CalibrateSweep {
            targets: standard_targets(),
            free_params: standard_free_params(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Sweep {
    Ple(PleSweep),
    Init(InitSweep),
    Saturation(SaturationSweep),
    Ssr(SsrSweep),
    T1(T1Sweep),
    Cpt(CptSweep),
    Calibrate(CalibrateSweep),
}

impl Sweep {
    pub fn default_for(exp: Experiment) -> Sweep {
        match exp {
            Experiment::Ple => Sweep::Ple(PleSweep::default()),
            Experiment::Init => Sweep::Init(InitSweep::default()),
            Experiment::Saturation => Sweep::Saturation(SaturationSweep::default()),
            Experiment::Ssr => Sweep::Ssr(SsrSweep::default()),
            Experiment::T1 => Sweep::T1(T1Sweep::default()),
            Experiment::Cpt => Sweep::Cpt(CptSweep::default()),
            Experiment::Calibrate => Sweep::Calibrate(CalibrateSweep::default()),
        }
    }

    fn parse(exp: Experiment, v: Value) -> Result<Sweep> {
        fn typed<T: DeserializeOwned>(v: Value) -> Result<T> {
            serde_path_to_error::deserialize(v).map_err(|e| {
                let path = e.path().to_string();
                let path = if path == "." {
                    "sweep".to_string()
                } else {
                    format!("sweep.{path}")
                };
                CliError::config(path, e.into_inner().to_string())
            })
        }
        Ok(match exp {
            Experiment::Ple => Sweep::Ple(typed(v)?),
            Experiment::Init => Sweep::Init(typed(v)?),
            Experiment::Saturation => Sweep::Saturation(typed(v)?),
            Experiment::Ssr => Sweep::Ssr(typed(v)?),
            Experiment::T1 => Sweep::T1(typed(v)?),
            Experiment::Cpt => Sweep::Cpt(typed(v)?),
            Experiment::Calibrate => Sweep::Calibrate(typed(v)?),
        })
    }

    /// True when a run draws random numbers.
    fn is_stochastic(&self) -> bool {
        match self {
            Sweep::Ssr(_) => true,
            Sweep::Saturation(s) => s.noise > 0.0,
            Sweep::T1(s) => s.rate_noise > 0.0,
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, n: usize| {
            if n == 0 {
                Err(CliError::config(
                    format!("sweep.{name}"),
                    "must be nonempty",
                ))
            } else {
                Ok(())
            }
        };
        let positive =
            |name: &str, v: &[f64]| match v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
                Some(i) => Err(CliError::config(
                    format!("sweep.{name}[{i}]"),
                    "must be positive",
                )),
                None => Ok(()),
            };
        match self {
            Sweep::Ple(s) => {
                nonempty("fields", s.fields.len())?;
                if s.n_points < 2 {
                    return Err(CliError::config(
                        "sweep.n_points",
                        "needs at least 2 points",
                    ));
                }
                if let Some(i) = s.fields.iter().position(|b| !(*b >= 0.0 && b.is_finite())) {
                    return Err(CliError::config(
                        format!("sweep.fields[{i}]"),
                        "must be ≥ 0",
                    ));
                }
                if s.direction.iter().all(|c| *c == 0.0) {
                    return Err(CliError::config("sweep.direction", "must be nonzero"));
                }
            }
            Sweep::Init(s) => positive("duration", &[s.duration, s.bin_width])?,
            Sweep::Saturation(s) => {
                nonempty("powers", s.powers.len())?;
                positive("powers", &s.powers)?;
            }
            Sweep::Ssr(s) => nonempty("n_repeats", s.n_repeats)?,
            Sweep::T1(s) => {
                nonempty("delays", s.delays.len())?;
                nonempty("temperatures", s.temperatures.len())?;
                positive("temperatures", &s.temperatures)?;
            }
            Sweep::Cpt(s) => {
                nonempty("powers", s.powers.len())?;
                positive("powers", &s.powers)?;
                if s.n_points < 5 {
                    return Err(CliError::config(
                        "sweep.n_points",
                        "needs at least 5 points",
                    ));
                }
            }
            Sweep::Calibrate(_) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Calibration document; the shipped one when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Source<Calibration>>,
    /// Replaces the calibration's emitter parameters when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitter: Option<Source<EmitterParams>>,
    pub sweep: Sweep,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    #[serde(default)]
    calibration: Option<Source<Calibration>>,
    #[serde(default)]
    emitter: Option<Source<EmitterParams>>,
    #[serde(default)]
    sweep: Option<Value>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for `exp` with output under `pbv-out/<experiment>`.
    pub fn default_for(exp: Experiment) -> RunConfig {
        RunConfig {
            experiment: exp,
            calibration: None,
            emitter: None,
            sweep: Sweep::default_for(exp),
            seed: None,
            output_dir: default_output_dir(exp),
        }
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        if self.seed.is_none() && self.sweep.is_stochastic() {
            return Err(CliError::MissingSeed {
                experiment: self.experiment.to_string(),
            });
        }
        Ok(())
    }

    /// Calibration with the emitter override applied.
    pub fn resolve_calibration(&self) -> Result<Calibration> {
        let mut cal = match &self.calibration {
            Some(src) => src.load()?,
            None => Calibration::shipped(),
        };
        if let Some(src) = &self.emitter {
            cal.emitter = src.load()?;
        }
        cal.validate().map_err(|e| CliError::Experiment {
            experiment: self.experiment.to_string(),
            source: e,
        })?;
        Ok(cal)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn default_output_dir(exp: Experiment) -> PathBuf {
    Path::new("pbv-out").join(exp.name())
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::config(e.path().to_string(), e.into_inner().to_string()))?;
    let sweep = match raw.sweep {
        Some(v) => Sweep::parse(raw.experiment, v)?,
        None => Sweep::default_for(raw.experiment),
    };
    let cfg = RunConfig {
        experiment: raw.experiment,
        calibration: raw.calibration,
        emitter: raw.emitter,
        sweep,
        seed: raw.seed,
        output_dir: raw
            .output_dir
            .unwrap_or_else(|| default_output_dir(raw.experiment)),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file; relative source paths become relative to its directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(src) = &mut cfg.calibration {
        src.rebase(base);
    }
    if let Some(src) = &mut cfg.emitter {
        src.rebase(base);
    }
    Ok(cfg)
}

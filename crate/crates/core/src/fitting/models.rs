//! Model zoo shared by every fit in the toolkit.
//!
//! Lorentzians are parameterized so that the reported linewidth is a fit
//! parameter: peaks by `(center, fwhm, area, baseline)`, dips by
//! `(center, fwhm, contrast, background)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::frequency_to_kelvin;

/// Closed parameter interval. Infinite ends mean unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const UNBOUNDED: Bounds = Bounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    /// Strictly positive in practice; the floor keeps widths and scales off zero.
    pub const POSITIVE: Bounds = Bounds {
        lo: 1e-300,
        hi: f64::INFINITY,
    };
    pub const NONNEGATIVE: Bounds = Bounds {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Bounds { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// A scalar model `y = f(params, x)` with box bounds on its parameters.
pub trait Model: Sync {
    fn name(&self) -> String;
    fn n_params(&self) -> usize;
    fn bounds(&self) -> Vec<Bounds>;
    fn evaluate(&self, params: &[f64], x: f64) -> f64;

    /// Forward-difference step for parameter `j`; relative to its value by default.
    fn fd_step(&self, params: &[f64], j: usize, rel: f64) -> f64 {
        crate::fitting::fd_step(params[j], rel)
    }
}

/// Built-in models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `(center, fwhm, area, baseline)`.
    Lorentzian,
    /// `peaks` × `(center, fwhm, area)` followed by a shared baseline.
    MultiLorentzian { peaks: usize },
    /// `(center, fwhm, contrast, background)`:
    /// `background · (1 − contrast · L(x))` with `L` peak-normalized.
    DipLorentzian,
    /// `(amplitude, tau, offset)`: `offset + amplitude · exp(−x / tau)`.
    MonoExponential,
    /// `(p_sat, eta)`: `Γ/2 · s/(1+s) / η` with `s = x / p_sat`; Γ is fixed.
    SaturationRate { gamma_rad: f64 },
    /// `(a_orbach, alpha)`: `a / (exp(α h Δ / k_B T) − 1)` with `x = T` in K.
    Orbach { delta_gs: f64 },
    /// `(a_orbach, a_raman)`: Orbach term at fixed `alpha` plus `a_raman · T⁷`.
    OrbachRaman { delta_gs: f64, alpha: f64 },
}

/// Peak-normalized Lorentzian: 1 at `x == center`, 1/2 at `|x − center| == fwhm/2`.
#[inline]
pub fn lorentzian_unit(x: f64, center: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    let d = x - center;
    hw * hw / (d * d + hw * hw)
}

/// Area-normalized Lorentzian (integrates to 1 over x).
#[inline]
pub fn lorentzian_density(x: f64, center: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    let d = x - center;
    hw / (PI * (d * d + hw * hw))
}

/// Bose occupation `1 / (exp(α h Δ / k_B T) − 1)`.
#[inline]
pub fn bose_factor(delta_hz: f64, alpha: f64, temperature: f64) -> f64 {
    1.0 / (alpha * frequency_to_kelvin(delta_hz) / temperature).exp_m1()
}

impl ModelSpec {
    pub fn parameter_names(&self) -> Vec<String> {
        match self {
            ModelSpec::Lorentzian => names(&["center", "fwhm", "area", "baseline"]),
            ModelSpec::MultiLorentzian { peaks } => {
                let mut out = Vec::with_capacity(3 * peaks + 1);
                for k in 0..*peaks {
                    out.push(format!("center_{k}"));
                    out.push(format!("fwhm_{k}"));
                    out.push(format!("area_{k}"));
                }
                out.push("baseline".into());
                out
            }
            ModelSpec::DipLorentzian => names(&["center", "fwhm", "contrast", "background"]),
            ModelSpec::MonoExponential => names(&["amplitude", "tau", "offset"]),
            ModelSpec::SaturationRate { .. } => names(&["p_sat", "eta"]),
            ModelSpec::Orbach { .. } => names(&["a_orbach", "alpha"]),
            ModelSpec::OrbachRaman { .. } => names(&["a_orbach", "a_raman"]),
        }
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Model for ModelSpec {
    fn name(&self) -> String {
        match self {
            ModelSpec::Lorentzian => "lorentzian".into(),
            ModelSpec::MultiLorentzian { .. } => "multi_lorentzian".into(),
            ModelSpec::DipLorentzian => "dip_lorentzian".into(),
            ModelSpec::MonoExponential => "mono_exponential".into(),
            ModelSpec::SaturationRate { .. } => "saturation_rate".into(),
            ModelSpec::Orbach { .. } => "orbach".into(),
            ModelSpec::OrbachRaman { .. } => "orbach_raman".into(),
        }
    }

    fn n_params(&self) -> usize {
        match self {
            ModelSpec::Lorentzian | ModelSpec::DipLorentzian => 4,
            ModelSpec::MultiLorentzian { peaks } => 3 * peaks + 1,
            ModelSpec::MonoExponential => 3,
            ModelSpec::SaturationRate { .. }
            | ModelSpec::Orbach { .. }
            | ModelSpec::OrbachRaman { .. } => 2,
        }
    }

    fn bounds(&self) -> Vec<Bounds> {
        use Bounds as B;
        match self {
            ModelSpec::Lorentzian => vec![B::UNBOUNDED, B::POSITIVE, B::UNBOUNDED, B::UNBOUNDED],
            ModelSpec::MultiLorentzian { peaks } => {
                let mut b = Vec::with_capacity(3 * peaks + 1);
                for _ in 0..*peaks {
                    b.extend([B::UNBOUNDED, B::POSITIVE, B::UNBOUNDED]);
                }
                b.push(B::UNBOUNDED);
                b
            }
            ModelSpec::DipLorentzian => {
                vec![B::UNBOUNDED, B::POSITIVE, B::new(0.0, 1.0), B::UNBOUNDED]
            }
            ModelSpec::MonoExponential => vec![B::UNBOUNDED, B::POSITIVE, B::UNBOUNDED],
            ModelSpec::SaturationRate { .. } => vec![B::POSITIVE, B::POSITIVE],
            ModelSpec::Orbach { .. } => vec![B::NONNEGATIVE, B::POSITIVE],
            ModelSpec::OrbachRaman { .. } => vec![B::NONNEGATIVE, B::NONNEGATIVE],
        }
    }

    /// Line centers step relative to their width: a step relative to a
    /// GHz-scale center would be a sizable fraction of a MHz-wide line.
    fn fd_step(&self, p: &[f64], j: usize, rel: f64) -> f64 {
        let is_center = match self {
            ModelSpec::Lorentzian | ModelSpec::DipLorentzian => j == 0,
            ModelSpec::MultiLorentzian { peaks } => j < 3 * peaks && j.is_multiple_of(3),
            _ => false,
        };
        if is_center && p[j + 1] > 0.0 {
            rel * p[j + 1]
        } else {
            crate::fitting::fd_step(p[j], rel)
        }
    }

    fn evaluate(&self, p: &[f64], x: f64) -> f64 {
        match self {
            ModelSpec::Lorentzian => p[3] + p[2] * lorentzian_density(x, p[0], p[1]),
            ModelSpec::MultiLorentzian { peaks } => {
                let baseline = p[3 * peaks];
                p[..3 * peaks].chunks_exact(3).fold(baseline, |acc, c| {
                    acc + c[2] * lorentzian_density(x, c[0], c[1])
                })
            }
            ModelSpec::DipLorentzian => p[3] * (1.0 - p[2] * lorentzian_unit(x, p[0], p[1])),
            ModelSpec::MonoExponential => p[2] + p[0] * (-x / p[1]).exp(),
            ModelSpec::SaturationRate { gamma_rad } => {
                let s = x / p[0];
                0.5 * gamma_rad * s / (1.0 + s) / p[1]
            }
            ModelSpec::Orbach { delta_gs } => p[0] * bose_factor(*delta_gs, p[1], x),
            ModelSpec::OrbachRaman { delta_gs, alpha } => {
                p[0] * bose_factor(*delta_gs, *alpha, x) + p[1] * x.powi(7)
            }
        }
    }
}

/// Adapter turning a closure into a [`Model`]; used by calibration.
pub struct FnModel<F> {
    pub name: String,
    pub bounds: Vec<Bounds>,
    pub f: F,
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }
    fn n_params(&self) -> usize {
        self.bounds.len()
    }
    fn bounds(&self) -> Vec<Bounds> {
        self.bounds.clone()
    }
    fn evaluate(&self, params: &[f64], x: f64) -> f64 {
        (self.f)(params, x)
    }
}

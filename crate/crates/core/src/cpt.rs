//! Coherent population trapping in the Λ system `{|↓⟩, |↑⟩, |e⟩}`.
//!
//! The pump drives `|↑⟩ ↔ |e⟩` (the B2 line) and the probe drives
//! `|↓⟩ ↔ |e⟩`. In the frame rotating with both lasers the Hamiltonian,
//! in rad/s, is
//!
//! ```text
//! H = −Δ_p |e⟩⟨e| + 2π δ₂ |↓⟩⟨↓| + Ω_probe/2 (|e⟩⟨↓| + h.c.) + Ω_pump/2 (|e⟩⟨↑| + h.c.)
//! ```
//!
//! with two-photon detuning `δ₂ = raman_offset − qubit_freq` in Hz.
//! Density matrices are vectorized column-major, `vec[i + 3j] = ρ_ij`.

use nalgebra::{Complex, Matrix3, SMatrix, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit, profile_initializer, ModelSpec};

pub type C64 = Complex<f64>;
pub type Liouvillian = SMatrix<C64, 9, 9>;
type Vec9 = SVector<C64, 9>;

pub const DOWN: usize = 0;
pub const UP: usize = 1;
pub const EXCITED: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSystem {
    /// rad/s.
    pub omega_pump: f64,
    /// rad/s.
    pub omega_probe: f64,
    /// One-photon detuning of the pump from B2, rad/s.
    pub delta_pump: f64,
    /// Pump–probe frequency offset, Hz.
    pub raman_offset: f64,
    /// Hz.
    pub qubit_freq: f64,
    /// 1/s.
    pub gamma_rad: f64,
    pub branch_down: f64,
    pub branch_up: f64,
    /// Pure spin dephasing `1/T2*`, 1/s.
    pub gamma_dephasing: f64,
    /// Ground flip rate `1/T1`, 1/s, split evenly between directions.
    pub gamma_spin: f64,
}

impl LambdaSystem {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega_pump,
            self.omega_probe,
            self.delta_pump,
            self.raman_offset,
            self.qubit_freq,
            self.gamma_rad,
            self.branch_down,
            self.branch_up,
            self.gamma_dephasing,
            self.gamma_spin,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Λ-system parameters must be finite"));
        }
        let rates = [
            self.gamma_rad,
            self.branch_down,
            self.branch_up,
            self.gamma_dephasing,
            self.gamma_spin,
        ];
        if rates.iter().any(|r| *r < 0.0) {
            return Err(Error::invalid("Λ-system rates must be nonnegative"));
        }
        if (self.branch_down + self.branch_up - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "branching fractions sum to {}, not 1",
                self.branch_down + self.branch_up
            )));
        }
        Ok(())
    }

    /// Two-photon detuning, Hz.
    pub fn two_photon_detuning(&self) -> f64 {
        self.raman_offset - self.qubit_freq
    }

    /// Rotating-frame Hamiltonian, rad/s.
    pub fn hamiltonian(&self) -> Matrix3<C64> {
        let mut h = Matrix3::<C64>::zeros();
        h[(EXCITED, EXCITED)] = C64::new(-self.delta_pump, 0.0);
        h[(DOWN, DOWN)] = C64::new(2.0 * std::f64::consts::PI * self.two_photon_detuning(), 0.0);
        let probe = C64::new(0.5 * self.omega_probe, 0.0);
        let pump = C64::new(0.5 * self.omega_pump, 0.0);
        h[(EXCITED, DOWN)] = probe;
        h[(DOWN, EXCITED)] = probe;
        h[(EXCITED, UP)] = pump;
        h[(UP, EXCITED)] = pump;
        h
    }

    /// Jump operators with their rates folded in.
    pub fn jump_operators(&self) -> Vec<Matrix3<C64>> {
        let op = |i: usize, j: usize, rate: f64| {
            let mut m = Matrix3::<C64>::zeros();
            m[(i, j)] = C64::new(rate.sqrt(), 0.0);
            m
        };
        let mut sz = Matrix3::<C64>::zeros();
        sz[(DOWN, DOWN)] = C64::new(-1.0, 0.0);
        sz[(UP, UP)] = C64::new(1.0, 0.0);
        vec![
            op(DOWN, EXCITED, self.gamma_rad * self.branch_down),
            op(UP, EXCITED, self.gamma_rad * self.branch_up),
            // σ_z at rate γφ/2 damps ground coherence at γφ
            sz * C64::new((0.5 * self.gamma_dephasing).sqrt(), 0.0),
            op(UP, DOWN, 0.5 * self.gamma_spin),
            op(DOWN, UP, 0.5 * self.gamma_spin),
        ]
    }
}

fn kron(a: &Matrix3<C64>, b: &Matrix3<C64>) -> Liouvillian {
    let mut out = Liouvillian::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[(3 * i + k, 3 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `L` such that `d vec(ρ)/dt = L vec(ρ)` for
/// `dρ/dt = −i[H, ρ] + Σ_k (J_k ρ J_k† − ½{J_k†J_k, ρ})`.
pub fn build_liouvillian(sys: &LambdaSystem) -> Result<Liouvillian> {
    sys.validate()?;
    let id = Matrix3::<C64>::identity();
    let h = sys.hamiltonian();
    let minus_i = C64::new(0.0, -1.0);
    let mut l = (kron(&id, &h) - kron(&h.transpose(), &id)) * minus_i;
    for j in sys.jump_operators() {
        let jdj = j.adjoint() * j;
        l += kron(&j.conjugate(), &j)
            - (kron(&id, &jdj) + kron(&jdj.transpose(), &id)) * C64::new(0.5, 0.0);
    }
    Ok(l)
}

pub fn vectorize(rho: &Matrix3<C64>) -> Vec9 {
    Vec9::from_fn(|k, _| rho[(k % 3, k / 3)])
}

pub fn unvectorize(v: &Vec9) -> Matrix3<C64> {
    Matrix3::from_fn(|i, j| v[i + 3 * j])
}

/// A validated 3×3 density matrix over `{|↓⟩, |↑⟩, |e⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOperator {
    pub rho: Matrix3<C64>,
}

impl DensityOperator {
    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().min()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn population(&self, level: usize) -> f64 {
        self.rho[(level, level)].re
    }

    /// Checks trace, Hermiticity and positivity.
    pub fn check(&self) -> Result<()> {
        let tr = self.trace();
        let herm = self.hermiticity_error();
        let min = self.min_eigenvalue();
        if (tr - 1.0).abs() > 1e-9 || herm > 1e-10 || min < -1e-10 {
            return Err(Error::invalid(format!(
                "not a density matrix: trace {tr}, hermiticity error {herm:e}, min eigenvalue {min:e}"
            )));
        }
        Ok(())
    }
}

/// Number of singular values of `L` below `1e-12 · σ_max`.
pub fn kernel_dimension(l: &Liouvillian) -> usize {
    let sv = l.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 9;
    }
    sv.iter().filter(|&&s| s <= 1e-12 * smax).count()
}

/// Solves `L vec(ρ) = 0` with the first equation replaced by `tr ρ = 1`.
pub fn steady_state(l: &Liouvillian) -> Result<DensityOperator> {
    let dim = kernel_dimension(l);
    if dim != 1 {
        return Err(Error::DegenerateSteadyState { dimension: dim });
    }
    let mut a = *l;
    let mut rhs = Vec9::zeros();
    for j in 0..9 {
        a[(0, j)] = C64::new(0.0, 0.0);
    }
    for d in [0, 4, 8] {
        a[(0, d)] = C64::new(1.0, 0.0);
    }
    rhs[0] = C64::new(1.0, 0.0);
    let v = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateSteadyState { dimension: 0 })?;
    let lnorm = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residual = (l * v).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual > 1e-10 * lnorm {
        return Err(Error::invalid(format!(
            "steady-state residual {residual:e} exceeds 1e-10·|L|"
        )));
    }
    let rho = unvectorize(&v);
    let out = DensityOperator {
        rho: (rho + rho.adjoint()) * C64::new(0.5, 0.0),
    };
    out.check()?;
    Ok(out)
}

/// `ρ(t) = exp(L t) ρ₀`.
///
/// Uses a single exponential step of norm at most 500 applied repeatedly,
/// so rounding grows linearly in `t` rather than through repeated
/// squaring. Cost is proportional to `|L|·t`.
pub fn propagate(l: &Liouvillian, rho0: &Matrix3<C64>, t: f64) -> Matrix3<C64> {
    let norm = (0..9)
        .map(|j| l.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let n = ((norm * t / 500.0).ceil() as u64).max(1);
    let step = (l * C64::new(t / n as f64, 0.0)).exp();
    let mut v = vectorize(rho0);
    for _ in 0..n {
        v = step * v;
    }
    unvectorize(&v)
}

/// Steady-state fluorescence `Γ·ρ_ee` at each Raman offset.
pub fn cpt_spectrum(sys: &LambdaSystem, raman_grid: &[f64]) -> Result<Vec<f64>> {
    sys.validate()?;
    raman_grid
        .par_iter()
        .map(|&r| {
            let s = LambdaSystem {
                raman_offset: r,
                ..*sys
            };
            let rho = steady_state(&build_liouvillian(&s)?)?;
            Ok(s.gamma_rad * rho.population(EXCITED))
        })
        .collect()
}

/// Optical power to Rabi frequency, `Ω = √(P_beam/Psat)·Γ/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiCalibration {
    /// W.
    pub p_sat: f64,
    /// 1/s.
    pub gamma_rad: f64,
    /// Share of the total power in the pump beam; the probe gets the rest.
    pub pump_fraction: f64,
}

impl RabiCalibration {
    pub fn rabi(&self, beam_power: f64) -> f64 {
        (beam_power / self.p_sat).sqrt() * self.gamma_rad / std::f64::consts::SQRT_2
    }

    /// `(Ω_pump, Ω_probe)` for a total incident power.
    pub fn split(&self, total_power: f64) -> (f64, f64) {
        (
            self.rabi(total_power * self.pump_fraction),
            self.rabi(total_power * (1.0 - self.pump_fraction)),
        )
    }
}

/// Weak-drive dip FWHM in Hz: ground coherence decays at `γφ + γs/2`.
pub fn intrinsic_fwhm(sys: &LambdaSystem) -> f64 {
    (sys.gamma_dephasing + 0.5 * sys.gamma_spin) / std::f64::consts::PI
}

/// Rough dip FWHM including optical-pumping broadening, Hz; used to size
/// the Raman grid.
pub fn estimated_fwhm(sys: &LambdaSystem) -> f64 {
    let gamma_opt = 0.5 * sys.gamma_rad.max(f64::MIN_POSITIVE);
    let pumping = (sys.omega_pump.powi(2) + sys.omega_probe.powi(2))
        / (4.0 * gamma_opt)
        / (1.0 + (sys.delta_pump / gamma_opt).powi(2));
    intrinsic_fwhm(sys) + pumping / std::f64::consts::PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthPoint {
    /// Total incident power, W.
    pub power: f64,
    /// Hz.
    pub fwhm: f64,
    /// 1σ from the dip fit, Hz.
    pub fwhm_sigma: f64,
}

/// Raman grid of `n` points spanning `±half_span_widths · fwhm` around the qubit.
pub fn raman_grid(sys: &LambdaSystem, half_span_widths: f64, n: usize) -> Vec<f64> {
    let w = estimated_fwhm(sys);
    let lo = sys.qubit_freq - half_span_widths * w;
    let step = 2.0 * half_span_widths * w / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Fits an inverted Lorentzian to one spectrum and returns the fit.
pub fn fit_dip(grid: &[f64], spectrum: &[f64]) -> Result<crate::fitting::FitResult> {
    let model = ModelSpec::DipLorentzian;
    let init = profile_initializer(&model, grid, spectrum)?;
    fit(&model, grid, spectrum, &vec![1.0; grid.len()], &init)
}

/// Dip FWHM at each total power, from spectra on a ±4-width, 161-point grid.
pub fn linewidth_vs_power(
    template: &LambdaSystem,
    powers: &[f64],
    calibration: &RabiCalibration,
) -> Result<Vec<LinewidthPoint>> {
    if powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::invalid("powers must be positive"));
    }
    powers
        .iter()
        .map(|&power| {
            let (omega_pump, omega_probe) = calibration.split(power);
            let sys = LambdaSystem {
                omega_pump,
                omega_probe,
                ..*template
            };
            let grid = raman_grid(&sys, 4.0, 161);
            let at_power = |e: Error| Error::FitAtPower {
                power,
                source: Box::new(e),
            };
            let spectrum = cpt_spectrum(&sys, &grid).map_err(at_power)?;
            let f = fit_dip(&grid, &spectrum).map_err(at_power)?;
            if !f.converged {
                return Err(at_power(Error::invalid("dip fit did not converge")));
            }
            Ok(LinewidthPoint {
                power,
                fwhm: f.params[1],
                fwhm_sigma: f.sigma[1],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2StarEstimate {
    /// s.
    pub t2star: f64,
    /// Intercept `b` of `fwhm = a·P + b`, Hz.
    pub zero_power_fwhm: f64,
    /// Hz/W.
    pub slope: f64,
    /// FWHM at the lowest measured power, Hz.
    pub lowest_power_fwhm: f64,
    /// `1/(π·lowest_power_fwhm)`, s.
    pub lowest_power_t2star: f64,
}

/// Weighted linear extrapolation of the linewidth to zero power.
///
/// Points with a positive `fwhm_sigma` are weighted by `1/σ²`; if any
/// point lacks one, all points are weighted equally.
pub fn extract_t2star(series: &[LinewidthPoint]) -> Result<T2StarEstimate> {
    if series.len() < 3 {
        return Err(Error::invalid("T2* extrapolation needs at least 3 points"));
    }
    let mut powers: Vec<f64> = series.iter().map(|p| p.power).collect();
    powers.sort_by(f64::total_cmp);
    if powers.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("powers must be distinct"));
    }
    let use_sigma = series.iter().all(|p| p.fwhm_sigma > 0.0);
    let w: Vec<f64> = series
        .iter()
        .map(|p| {
            if use_sigma {
                p.fwhm_sigma.powi(-2)
            } else {
                1.0
            }
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let mx = series.iter().zip(&w).map(|(p, w)| w * p.power).sum::<f64>() / sw;
    let my = series.iter().zip(&w).map(|(p, w)| w * p.fwhm).sum::<f64>() / sw;
    let sxx: f64 = series
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.power - mx).powi(2))
        .sum();
    let sxy: f64 = series
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.power - mx) * (p.fwhm - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if !(intercept > 0.0) {
        return Err(Error::ExtrapolationInvalid { intercept });
    }
    let lowest = series
        .iter()
        .min_by(|a, b| a.power.total_cmp(&b.power))
        .expect("nonempty");
    Ok(T2StarEstimate {
        t2star: 1.0 / (std::f64::consts::PI * intercept),
        zero_power_fwhm: intercept,
        slope,
        lowest_power_fwhm: lowest.fwhm,
        lowest_power_t2star: 1.0 / (std::f64::consts::PI * lowest.fwhm),
    })
}

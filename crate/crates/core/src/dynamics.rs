//! Rate-equation dynamics of the four-level system `{g↓, g↑, e↓, e↑}`.
//!
//! A1 drives `g↓ ↔ e↓` and B2 drives `g↑ ↔ e↑`. Each excited level decays
//! with total rate Γ, a fraction `1/(η+1)` of which flips the spin. Ground
//! flips obey detailed balance at the qubit frequency. Evolution uses the
//! matrix exponential of the 4×4 generator, so the 10⁸/s optical and
//! 10²/s spin time scales coexist without step-size tuning.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, PLANCK};
use crate::error::{Error, Result};
use crate::fitting::bose_factor;

pub const G_DOWN: usize = 0;
pub const G_UP: usize = 1;
pub const E_DOWN: usize = 2;
pub const E_UP: usize = 3;

pub type Populations = [f64; 4];

/// Balanced ground populations left behind by the 532 nm repump.
pub const BALANCED: Populations = [0.5, 0.5, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseTarget {
    A1,
    B2,
    Repump532,
    Idle,
}

impl PulseTarget {
    /// `(ground, excited)` levels of a resonant drive.
    fn driven_pair(self) -> Option<(usize, usize)> {
        match self {
            PulseTarget::A1 => Some((G_DOWN, E_DOWN)),
            PulseTarget::B2 => Some((G_UP, E_UP)),
            _ => None,
        }
    }

    /// Ground level the drive pumps population into.
    pub fn pumped_into(self) -> Option<usize> {
        match self {
            PulseTarget::A1 => Some(G_UP),
            PulseTarget::B2 => Some(G_DOWN),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSegment {
    pub target: PulseTarget,
    /// W, ignored for idle and repump.
    #[serde(default)]
    pub power: f64,
    /// s.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub segments: Vec<PulseSegment>,
    #[serde(default = "one")]
    pub n_repeats: usize,
}

fn one() -> usize {
    1
}

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || self.n_repeats == 0 {
            return Err(Error::invalid(
                "pulse sequence needs at least one segment and one repeat",
            ));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::invalid(format!(
                    "segment {i}: duration must be positive"
                )));
            }
            if !(s.power >= 0.0 && s.power.is_finite()) {
                return Err(Error::invalid(format!(
                    "segment {i}: power must be nonnegative"
                )));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Ground-state spin-lattice relaxation, `1/T1(T)`.
///
/// `a_orbach` multiplies the dimensionless Bose factor with the `Δ³`
/// prefactor already folded in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureModel {
    /// 1/s.
    pub a_orbach: f64,
    pub alpha: f64,
    /// 1/(s·K⁷).
    pub a_raman: f64,
    /// Hz.
    pub delta_gs: f64,
}

impl TemperatureModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_orbach >= 0.0 && self.a_raman >= 0.0 && self.alpha > 0.0 && self.delta_gs > 0.0)
        {
            return Err(Error::invalid(
                "temperature model needs a_orbach, a_raman ≥ 0 and alpha, delta_gs > 0",
            ));
        }
        Ok(())
    }
}

/// Total ground-state flip rate `γ↑ + γ↓ = 1/T1`, 1/s.
pub fn spin_flip_rate(temperature: f64, model: &TemperatureModel) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    model.a_orbach * bose_factor(model.delta_gs, model.alpha, temperature)
        + model.a_raman * temperature.powi(7)
}

/// Saturating scattering rate `(Γ/2)·s/(1+s)` with `s = P/Psat`.
pub fn pump_rate_from_power(power: f64, p_sat: f64, gamma_rad: f64) -> f64 {
    let s = power / p_sat;
    0.5 * gamma_rad * s / (1.0 + s)
}

/// `pump_rate_from_power / η`; zero when fully cycling.
pub fn initialization_rate(power: f64, p_sat: f64, gamma_rad: f64, eta: f64) -> f64 {
    if eta.is_infinite() {
        return 0.0;
    }
    pump_rate_from_power(power, p_sat, gamma_rad) / eta
}

/// `exp(−h f / k_B T)`, the up/down ratio of ground flips.
pub fn boltzmann_ratio(qubit_freq: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    (-PLANCK * qubit_freq / (BOLTZMANN * temperature)).exp()
}

/// Splits a total flip rate into `(γ↑, γ↓)` obeying detailed balance.
pub fn thermal_flip_rates(total: f64, qubit_freq: f64, temperature: f64) -> (f64, f64) {
    let b = boltzmann_ratio(qubit_freq, temperature);
    (total * b / (1.0 + b), total / (1.0 + b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    /// 1/s.
    pub gamma_rad: f64,
    /// Branching ratio; `f64::INFINITY` when fully cycling.
    pub eta: f64,
    /// W.
    pub p_sat: f64,
    /// `g↓ → g↑`, 1/s.
    pub gamma_flip_up: f64,
    /// `g↑ → g↓`, 1/s.
    pub gamma_flip_down: f64,
    pub detection_efficiency: f64,
}

impl RateModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma_rad > 0.0
            && self.gamma_rad.is_finite()
            && self.eta > 0.0
            && self.p_sat > 0.0
            && self.gamma_flip_up >= 0.0
            && self.gamma_flip_down >= 0.0
            && (0.0..=1.0).contains(&self.detection_efficiency);
        if !ok {
            return Err(Error::invalid(format!("invalid rate model: {self:?}")));
        }
        Ok(())
    }

    /// Spin-flipping part of the excited-state decay, 1/s.
    pub fn gamma_flip_optical(&self) -> f64 {
        if self.eta.is_infinite() {
            0.0
        } else {
            self.gamma_rad / (self.eta + 1.0)
        }
    }

    /// Generator `M` of `dp/dt = M p` for a drive on `target` at `power`.
    pub fn generator(&self, target: PulseTarget, power: f64) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        let mut add = |from: usize, to: usize, rate: f64| {
            m[(to, from)] += rate;
        };
        if let Some((g, e)) = target.driven_pair() {
            // absorption and stimulated emission at equal rates
            let r = 0.5 * self.gamma_rad * power / self.p_sat;
            add(g, e, r);
            add(e, g, r);
        }
        let flip = self.gamma_flip_optical();
        let keep = self.gamma_rad - flip;
        add(E_DOWN, G_DOWN, keep);
        add(E_DOWN, G_UP, flip);
        add(E_UP, G_UP, keep);
        add(E_UP, G_DOWN, flip);
        add(G_DOWN, G_UP, self.gamma_flip_up);
        add(G_UP, G_DOWN, self.gamma_flip_down);
        for j in 0..4 {
            let out: f64 = (0..4).filter(|&i| i != j).map(|i| m[(i, j)]).sum();
            m[(j, j)] = -out;
        }
        m
    }
}

/// Checks generator form: nonnegative off-diagonal rates, zero column sums
/// relative to the largest entry.
pub fn check_generator(m: &Matrix4<f64>) -> Result<()> {
    let scale = m.amax();
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("generator has non-finite entries"));
    }
    for j in 0..4 {
        for i in 0..4 {
            if i != j && m[(i, j)] < 0.0 {
                return Err(Error::invalid(format!(
                    "negative transition rate M[{i}][{j}] = {}",
                    m[(i, j)]
                )));
            }
        }
        let sum: f64 = m.column(j).sum();
        if sum.abs() > 1e-9 * scale {
            return Err(Error::invalid(format!(
                "generator column {j} sums to {sum:e}, not 0"
            )));
        }
    }
    Ok(())
}

fn check_probability(p: &Populations) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "initial populations {p:?} are not a probability vector"
        )));
    }
    Ok(())
}

/// `p(t) = exp(M t) p0` at each requested time.
pub fn evolve_populations(
    m: &Matrix4<f64>,
    p0: Populations,
    times: &[f64],
) -> Result<Vec<Populations>> {
    check_generator(m)?;
    check_probability(&p0)?;
    let p = Vector4::from(p0);
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("time {t} must be finite and ≥ 0")));
            }
            Ok(transition_matrix(m, t) * p)
        })
        .map(|r| r.map(Into::into))
        .collect()
}

/// Propagator and its time integral over a step of length `dt`:
/// `(exp(M dt), ∫₀^dt exp(M s) ds)` for a generator `M`.
///
/// Uniformization writes `M = Q − qI` with `Q ≥ 0`, so every Taylor term
/// is nonnegative and nothing cancels. The short base step is doubled up
/// to `dt`, renormalizing columns (to 1 and to the elapsed time) after
/// each doubling so probability is conserved to rounding.
pub(crate) fn propagators(m: &Matrix4<f64>, dt: f64) -> (Matrix4<f64>, Matrix4<f64>) {
    const TERMS: usize = 40;
    let q = (0..4).map(|i| -m[(i, i)]).fold(0.0, f64::max);
    if q == 0.0 || dt == 0.0 {
        return (Matrix4::identity(), Matrix4::identity() * dt);
    }
    let mut doublings = 0;
    let mut h = dt;
    while q * h > 0.5 {
        h *= 0.5;
        doublings += 1;
    }
    let x = q * h;
    let a = (m + Matrix4::identity() * q) * h;
    // d_n = Σ_j x^j / (n+1+j)!, so ∫₀^h e^{−qs} s^n/n! ds = h^{n+1} e^{−x} d_n
    let d: Vec<f64> = (0..TERMS)
        .map(|n| {
            let mut term = 1.0 / factorial(n + 1);
            let mut sum = 0.0;
            for j in 0..TERMS {
                sum += term;
                term *= x / (n + 2 + j) as f64;
            }
            sum
        })
        .collect();
    let mut power = Matrix4::<f64>::identity();
    let mut e = Matrix4::<f64>::zeros();
    let mut integral = Matrix4::<f64>::zeros();
    for (n, dn) in d.iter().enumerate() {
        e += power / factorial(n);
        integral += power * *dn;
        power = a * power;
    }
    let decay = (-x).exp();
    e *= decay;
    integral *= h * decay;
    normalize_columns(&mut e, &mut integral, h);
    for _ in 0..doublings {
        integral += e * integral;
        e = e * e;
        h *= 2.0;
        normalize_columns(&mut e, &mut integral, h);
    }
    (e, integral)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn normalize_columns(e: &mut Matrix4<f64>, integral: &mut Matrix4<f64>, h: f64) {
    for j in 0..4 {
        let s = e.column(j).sum();
        e.column_mut(j).unscale_mut(s);
        let s = integral.column(j).sum();
        integral.column_mut(j).scale_mut(h / s);
    }
}

/// `exp(M t)` for a generator `M`.
pub(crate) fn transition_matrix(m: &Matrix4<f64>, t: f64) -> Matrix4<f64> {
    propagators(m, t).0
}

/// Binned record of one evolution under a constant generator.
#[derive(Debug, Clone, PartialEq)]
struct Binned {
    /// `∫ p(t) dt` over each bin.
    integrals: Vec<Vector4<f64>>,
    widths: Vec<f64>,
    end: Vector4<f64>,
}

fn evolve_binned(m: &Matrix4<f64>, p0: Vector4<f64>, duration: f64, bin_width: f64) -> Binned {
    let n_full = (duration / bin_width).floor() as usize;
    let rest = duration - n_full as f64 * bin_width;
    let (e, q) = propagators(m, bin_width);
    let mut p = p0;
    let mut integrals = Vec::with_capacity(n_full + 1);
    let mut widths = Vec::with_capacity(n_full + 1);
    for _ in 0..n_full {
        integrals.push(q * p);
        widths.push(bin_width);
        p = e * p;
    }
    // drop slivers left over by rounding
    if rest > 1e-9 * bin_width {
        let (e, q) = propagators(m, rest);
        integrals.push(q * p);
        widths.push(rest);
        p = e * p;
    }
    Binned {
        integrals,
        widths,
        end: p,
    }
}

/// Expected detected photons from an excited-population integral.
fn photons(model: &RateModel, integral: &Vector4<f64>) -> f64 {
    model.detection_efficiency * model.gamma_rad * (integral[E_DOWN] + integral[E_UP])
}

/// Lets the excited state relax with the lasers off.
fn relax_excited(model: &RateModel, p: Vector4<f64>) -> Vector4<f64> {
    let m = model.generator(PulseTarget::Idle, 0.0);
    transition_matrix(&m, 50.0 / model.gamma_rad) * p
}

/// Kernel of the generator as a probability vector; `None` when the
/// stationary state is not unique.
pub fn stationary_state(m: &Matrix4<f64>) -> Option<Populations> {
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let null: Vec<usize> = (0..4)
        .filter(|&i| svd.singular_values[i] <= 1e-12 * smax.max(f64::MIN_POSITIVE))
        .collect();
    if null.len() != 1 {
        return None;
    }
    let v_t = svd.v_t?;
    let v = v_t.row(null[0]).transpose();
    let sum = v.sum();
    if sum == 0.0 {
        return None;
    }
    Some((v / sum).map(|x| x.max(0.0)).into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitializationResult {
    /// Bin start times, s.
    pub times: Vec<f64>,
    /// Expected detected photons per bin.
    pub counts: Vec<f64>,
    /// Target ground population at the end of the pulse, after the
    /// excited state has relaxed.
    pub fidelity: f64,
    /// Same quantity in the infinite-pulse limit; `None` without a unique
    /// stationary state (no relaxation paths out of the dark level).
    pub steady_state_fidelity: Option<f64>,
    /// `1 − I_end / (2 I_0)`, the fluorescence-contrast estimate with `I_0`
    /// the fluorescence of the balanced start.
    pub contrast_fidelity: f64,
    pub final_populations: Populations,
}

/// Drives `target` (A1 or B2) from balanced populations.
pub fn simulate_initialization(
    model: &RateModel,
    target: PulseTarget,
    power: f64,
    duration: f64,
    bin_width: f64,
) -> Result<InitializationResult> {
    model.validate()?;
    let Some(pumped) = target.pumped_into() else {
        return Err(Error::invalid(format!(
            "{target:?} is not a resonant drive"
        )));
    };
    if !(power > 0.0 && duration > 0.0 && bin_width > 0.0) {
        return Err(Error::invalid(
            "power, duration and bin width must be positive",
        ));
    }
    if duration / bin_width > 1e7 {
        return Err(Error::invalid("more than 1e7 time bins requested"));
    }
    let m = model.generator(target, power);
    let binned = evolve_binned(&m, Vector4::from(BALANCED), duration, bin_width);
    let mut t = 0.0;
    let mut times = Vec::with_capacity(binned.widths.len());
    for w in &binned.widths {
        times.push(t);
        t += w;
    }
    let counts = binned.integrals.iter().map(|q| photons(model, q)).collect();

    let relaxed = relax_excited(model, binned.end);
    let steady_state_fidelity = stationary_state(&m).map(|ss| {
        let r = relax_excited(model, Vector4::from(ss));
        r[pumped] / (r[G_DOWN] + r[G_UP])
    });
    let scattering = pump_rate_from_power(power, model.p_sat, model.gamma_rad);
    let i_end = model.gamma_rad * (binned.end[E_DOWN] + binned.end[E_UP]);
    Ok(InitializationResult {
        times,
        counts,
        fidelity: relaxed[pumped] / (relaxed[G_DOWN] + relaxed[G_UP]),
        steady_state_fidelity,
        contrast_fidelity: 1.0 - i_end / scattering,
        final_populations: binned.end.into(),
    })
}

/// Photon-count record of a pulse sequence, folded over repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTrace {
    /// Bin start times within one repeat, s.
    pub times: Vec<f64>,
    /// Expected detected photons per bin, summed over repeats.
    pub counts: Vec<f64>,
    /// Index of the segment each bin belongs to.
    pub segment: Vec<usize>,
    pub final_populations: Populations,
}

/// Runs a pulse sequence. The 532 nm repump resets to balanced ground
/// populations at the end of its segment and records no photons.
pub fn run_sequence(
    model: &RateModel,
    seq: &PulseSequence,
    p0: Populations,
    bin_width: f64,
) -> Result<SequenceTrace> {
    model.validate()?;
    seq.validate()?;
    check_probability(&p0)?;
    if !(bin_width > 0.0) || seq.duration() / bin_width > 1e7 {
        return Err(Error::invalid(
            "bin width must be positive and give ≤ 1e7 bins",
        ));
    }
    let mut p = Vector4::from(p0);
    let mut trace = SequenceTrace {
        times: Vec::new(),
        counts: Vec::new(),
        segment: Vec::new(),
        final_populations: p0,
    };
    for rep in 0..seq.n_repeats {
        let mut t0 = 0.0;
        let mut k = 0;
        for (si, s) in seq.segments.iter().enumerate() {
            let binned = if s.target == PulseTarget::Repump532 {
                let n = evolve_binned(&Matrix4::zeros(), p, s.duration, bin_width);
                Binned {
                    integrals: vec![Vector4::zeros(); n.widths.len()],
                    widths: n.widths,
                    end: Vector4::from(BALANCED),
                }
            } else {
                evolve_binned(
                    &model.generator(s.target, s.power),
                    p,
                    s.duration,
                    bin_width,
                )
            };
            for (q, w) in binned.integrals.iter().zip(&binned.widths) {
                let c = photons(model, q);
                if rep == 0 {
                    trace.times.push(t0);
                    trace.counts.push(c);
                    trace.segment.push(si);
                } else {
                    trace.counts[k] += c;
                }
                t0 += w;
                k += 1;
            }
            p = binned.end;
        }
    }
    trace.final_populations = p.into();
    Ok(trace)
}

/// The T1 measurement: repump, B2 initialization, variable dark delay,
/// then a B2 probe whose photons form the recovery signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Protocol {
    pub init_power: f64,
    pub init_duration: f64,
    pub probe_power: f64,
    pub probe_duration: f64,
}

impl T1Protocol {
    /// 150 µs initialization and 10 µs probe, both at `p_sat`.
    pub fn standard(p_sat: f64) -> Self {
        T1Protocol {
            init_power: p_sat,
            init_duration: 150e-6,
            probe_power: p_sat,
            probe_duration: 10e-6,
        }
    }
}

/// Expected probe counts after each delay.
pub fn simulate_t1_sequence(
    model: &RateModel,
    protocol: &T1Protocol,
    delays: &[f64],
) -> Result<Vec<f64>> {
    model.validate()?;
    if delays.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::invalid("delays must be finite and ≥ 0"));
    }
    let init = model.generator(PulseTarget::B2, protocol.init_power);
    let after_init = transition_matrix(&init, protocol.init_duration) * Vector4::from(BALANCED);
    let idle = model.generator(PulseTarget::Idle, 0.0);
    let probe = model.generator(PulseTarget::B2, protocol.probe_power);
    let (_, q) = propagators(&probe, protocol.probe_duration);
    Ok(delays
        .iter()
        .map(|&d| {
            let p = transition_matrix(&idle, d) * after_init;
            photons(model, &(q * p))
        })
        .collect())
}

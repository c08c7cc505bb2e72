//! Photon statistics of the single-shot readout sequence.
//!
//! During a readout window of length `W` the emitter scatters at the
//! detected rate `R` until it is optically pumped dark at a random time
//! `τ ~ Exp(k)`. Counts are Poisson in the integrated rate plus a constant
//! background `b`. The dark pulse sees whatever bright time is left over,
//! `clamp(τ − W, 0, D)`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsrConfig {
    /// s.
    pub init_duration: f64,
    /// s.
    pub readout_duration: f64,
    /// s.
    pub dark_duration: f64,
    /// Idle time between pulses, s.
    pub gaps: f64,
    pub n_repeats: usize,
    /// Detected photon rate in the bright state, 1/s.
    pub detected_rate: f64,
    /// Optical depumping rate during readout, 1/s.
    pub flip_rate_readout: f64,
    /// 1/s.
    pub background_rate: f64,
    pub rng_seed: u64,
}

impl SsrConfig {
    pub fn validate(&self) -> Result<()> {
        let durations = [
            self.init_duration,
            self.readout_duration,
            self.dark_duration,
            self.gaps,
        ];
        if durations.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("SSR durations must be positive"));
        }
        let rates = [
            self.detected_rate,
            self.flip_rate_readout,
            self.background_rate,
        ];
        if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("SSR rates must be finite and nonnegative"));
        }
        if self.n_repeats == 0 {
            return Err(Error::invalid("SSR needs at least one repeat"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsrRun {
    pub readout: Vec<u32>,
    pub dark: Vec<u32>,
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    // means here are a few photons; the cast cannot overflow
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as u32
}

/// Monte Carlo record of `n_repeats` readout/dark pairs.
///
/// Repeat `i` draws from ChaCha8 seeded with `rng_seed` on stream `i`, so
/// the result is independent of thread scheduling.
pub fn simulate_ssr_run(cfg: &SsrConfig) -> Result<SsrRun> {
    cfg.validate()?;
    let w = cfg.readout_duration;
    let d = cfg.dark_duration;
    let depump = (cfg.flip_rate_readout > 0.0)
        .then(|| Exp::new(cfg.flip_rate_readout).expect("positive rate"));
    let pairs: Vec<(u32, u32)> = (0..cfg.n_repeats as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(i);
            let tau = depump.map_or(f64::INFINITY, |e| e.sample(&mut rng));
            let bright_readout = tau.min(w);
            let bright_dark = (tau - w).clamp(0.0, d);
            let r = poisson(
                cfg.detected_rate * bright_readout + cfg.background_rate * w,
                &mut rng,
            );
            let k = poisson(
                cfg.detected_rate * bright_dark + cfg.background_rate * d,
                &mut rng,
            );
            (r, k)
        })
        .collect();
    let (readout, dark) = pairs.into_iter().unzip();
    Ok(SsrRun { readout, dark })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    /// Photon number → occurrences.
    pub counts: BTreeMap<u32, u64>,
    pub n_total: u64,
    pub mean: f64,
}

impl CountHistogram {
    pub fn from_counts(samples: &[u32]) -> Self {
        let mut counts = BTreeMap::new();
        for &c in samples {
            *counts.entry(c).or_insert(0u64) += 1;
        }
        Self::from_map(counts)
    }

    pub fn from_map(counts: BTreeMap<u32, u64>) -> Self {
        let n_total: u64 = counts.values().sum();
        let weighted: f64 = counts.iter().map(|(&k, &v)| k as f64 * v as f64).sum();
        let mean = if n_total > 0 {
            weighted / n_total as f64
        } else {
            0.0
        };
        CountHistogram {
            counts,
            n_total,
            mean,
        }
    }

    pub fn max_count(&self) -> u32 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    /// Fraction of shots with at least `threshold` photons.
    pub fn fraction_at_least(&self, threshold: u32) -> f64 {
        let above: u64 = self.counts.range(threshold..).map(|(_, v)| v).sum();
        above as f64 / self.n_total as f64
    }

    /// Normalized frequencies for `0..=n_max`.
    pub fn frequencies(&self, n_max: u32) -> Vec<f64> {
        (0..=n_max)
            .map(|n| *self.counts.get(&n).unwrap_or(&0) as f64 / self.n_total as f64)
            .collect()
    }
}

/// Readout and dark errors and `F = 1 − (E_R + E_D)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsrFidelity {
    pub threshold: u32,
    pub f_ssr: f64,
    pub e_r: f64,
    pub e_d: f64,
}

/// Counts `≥ threshold` are classified bright.
pub fn classify_fidelity(
    readout: &CountHistogram,
    dark: &CountHistogram,
    threshold: u32,
) -> Result<SsrFidelity> {
    if readout.n_total == 0 || dark.n_total == 0 {
        return Err(Error::invalid("histograms must be nonempty"));
    }
    let e_r = 1.0 - readout.fraction_at_least(threshold);
    let e_d = dark.fraction_at_least(threshold);
    Ok(SsrFidelity {
        threshold,
        f_ssr: 1.0 - 0.5 * (e_r + e_d),
        e_r,
        e_d,
    })
}

/// Exhaustive scan over `0..=max+1`; ties go to the smallest threshold.
pub fn optimal_threshold(readout: &CountHistogram, dark: &CountHistogram) -> Result<SsrFidelity> {
    let top = readout.max_count().max(dark.max_count()) + 1;
    let mut best = classify_fidelity(readout, dark, 0)?;
    for t in 1..=top {
        let f = classify_fidelity(readout, dark, t)?;
        if f.f_ssr > best.f_ssr {
            best = f;
        }
    }
    Ok(best)
}

/// Poisson probability `μⁿ e^{−μ} / n!`.
pub fn poisson_pmf(n: u32, mu: f64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mu.ln() - mu - ln_factorial(n)).exp()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `P(N > n_max)` for a Poisson variable, summed upward without cancellation.
fn poisson_upper_tail(n_max: u32, mu: f64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let mut term = poisson_pmf(n_max + 1, mu);
    let mut sum = 0.0;
    let mut n = n_max + 1;
    while term > 1e-300 && (term > 1e-18 * sum || (n as f64) < mu) {
        sum += term;
        n += 1;
        term *= mu / n as f64;
    }
    sum
}

/// Count distribution over `0..=n_max` for one readout window:
///
/// `pmf(n) = ∫₀^W k e^{−kt} Pois(n; Rt + bW) dt + e^{−kW} Pois(n; (R + b)W)`.
///
/// Each term is integrated by adaptive Gauss–Kronrod to absolute error
/// below 1e-13. Errors with [`Error::TailMass`] when more than 1e-9 of the
/// probability lies above `n_max`.
pub fn analytic_count_pmf(
    detected_rate: f64,
    flip_rate: f64,
    window: f64,
    background_rate: f64,
    n_max: u32,
) -> Result<Vec<f64>> {
    let params = [detected_rate, flip_rate, window, background_rate];
    if params.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(
            "pmf parameters must be finite and nonnegative",
        ));
    }
    let (r, k, w, b) = (detected_rate, flip_rate, window, background_rate);
    let bg = b * w;
    let survive = (-k * w).exp();
    let mixture = |g: &dyn Fn(f64) -> f64| -> f64 {
        let integral = if k > 0.0 && w > 0.0 {
            gauss_kronrod(&|t| k * (-k * t).exp() * g(r * t + bg), 0.0, w, 1e-13)
        } else {
            0.0
        };
        integral + survive * g((r + b) * w)
    };
    let tail = mixture(&|mu| poisson_upper_tail(n_max, mu));
    if tail > 1e-9 {
        return Err(Error::TailMass {
            tail,
            n_max: n_max as usize,
        });
    }
    Ok((0..=n_max)
        .map(|n| mixture(&|mu| poisson_pmf(n, mu)))
        .collect())
}

/// Count distribution of the dark pulse following a readout of length
/// `readout_window`. Given survival through the readout the remaining
/// bright time is again exponential, so the dark pmf mixes a pure
/// background Poisson with a fresh readout pmf of length `dark_window`.
pub fn analytic_dark_pmf(
    detected_rate: f64,
    flip_rate: f64,
    readout_window: f64,
    dark_window: f64,
    background_rate: f64,
    n_max: u32,
) -> Result<Vec<f64>> {
    let survive = (-flip_rate * readout_window).exp();
    let bright = analytic_count_pmf(
        detected_rate,
        flip_rate,
        dark_window,
        background_rate,
        n_max,
    )?;
    let mu = background_rate * dark_window;
    Ok(bright
        .iter()
        .enumerate()
        .map(|(n, p)| (1.0 - survive) * poisson_pmf(n as u32, mu) + survive * p)
        .collect())
}

/// Closed-form mean counts and threshold-1 fidelity of the SSR model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsrObservables {
    pub mean_readout: f64,
    pub mean_dark: f64,
    pub f_ssr_threshold_1: f64,
}

pub fn ssr_observables(
    detected_rate: f64,
    flip_rate: f64,
    readout_window: f64,
    dark_window: f64,
    background_rate: f64,
) -> SsrObservables {
    let (r, k, w, d, b) = (
        detected_rate,
        flip_rate,
        readout_window,
        dark_window,
        background_rate,
    );
    // E[min(τ, L)] for τ ~ Exp(k)
    let bright_time = |l: f64| if k > 0.0 { -(-k * l).exp_m1() / k } else { l };
    let survive = (-k * w).exp();
    // P(no photon in a window of length l starting bright), background excluded
    let p0_signal = |l: f64| {
        let kr = k + r;
        if kr == 0.0 {
            1.0
        } else {
            k / kr * -(-kr * l).exp_m1() + (-kr * l).exp()
        }
    };
    let p0_readout = (-b * w).exp() * p0_signal(w);
    let p0_dark = (-b * d).exp() * ((1.0 - survive) + survive * p0_signal(d));
    SsrObservables {
        mean_readout: r * bright_time(w) + b * w,
        mean_dark: r * survive * bright_time(d) + b * d,
        f_ssr_threshold_1: 1.0 - 0.5 * (p0_readout + (1.0 - p0_dark)),
    }
}

/// Total variation distance between an empirical histogram and a pmf.
/// Histogram mass beyond the pmf support counts in full.
pub fn tv_distance(hist: &CountHistogram, pmf: &[f64]) -> f64 {
    let n = hist.n_total as f64;
    let mut d = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        let h = *hist.counts.get(&(i as u32)).unwrap_or(&0) as f64 / n;
        d += (h - p).abs();
    }
    let beyond: u64 = hist.counts.range(pmf.len() as u32..).map(|(_, v)| v).sum();
    let missing = 1.0 - pmf.iter().sum::<f64>();
    0.5 * (d + beyond as f64 / n + missing.max(0.0))
}

#[allow(clippy::excessive_precision)]
const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights at the odd Kronrod nodes (1, 3, 5, 7)
#[allow(clippy::excessive_precision)]
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive 7/15-point Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, eps, depth)) = stack.pop() {
        let (v, err) = gk15(f, lo, hi);
        if err <= eps || depth >= 40 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * eps, depth + 1));
            stack.push((mid, hi, 0.5 * eps, depth + 1));
        }
    }
    total
}

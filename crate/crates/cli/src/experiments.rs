//! One function per experiment. Each computes everything in memory and
//! returns tables, figures and a JSON report; nothing touches the disk here.

use pbv_core::calibration::{calibrate, Calibration};
use pbv_core::cpt::{
    cpt_spectrum, extract_t2star, fit_dip, intrinsic_fwhm, raman_grid, LambdaSystem, LinewidthPoint,
};
use pbv_core::dynamics::{
    initialization_rate, simulate_initialization, simulate_t1_sequence, PulseTarget, T1Protocol,
};
use pbv_core::emitter::{transitions_at, FieldConfig};
use pbv_core::fitting::{fit, fit_auto, profile_initializer, FitResult, Model, ModelSpec};
use pbv_core::photon_stats::{
    analytic_count_pmf, analytic_dark_pmf, classify_fidelity, optimal_threshold, simulate_ssr_run,
    ssr_observables, tv_distance, CountHistogram,
};
use pbv_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::config::{
    CalibrateSweep, CptSweep, InitSweep, PleSweep, SaturationSweep, SsrSweep, T1Sweep,
};
use crate::output::{Cell, Csv};
use crate::svg::{Plot, Series};

#[derive(Debug, Default)]
pub struct Output {
    pub tables: Vec<(String, Csv)>,
    pub figures: Vec<(String, Plot)>,
    /// Extra JSON documents besides the report.
    pub documents: Vec<(String, Value)>,
    pub report: Value,
}

impl Output {
    fn new(report: Value) -> Self {
        Output {
            report,
            ..Output::default()
        }
    }

    fn table(&mut self, name: &str, csv: Csv) {
        self.tables.push((name.into(), csv));
    }

    fn figure(&mut self, name: &str, plot: Plot) {
        self.figures.push((name.into(), plot));
    }
}

fn fit_json(model: &ModelSpec, f: &FitResult) -> Value {
    let names = model.parameter_names();
    let params: serde_json::Map<String, Value> = names
        .iter()
        .zip(&f.params)
        .map(|(n, v)| (n.clone(), json!(v)))
        .collect();
    let sigma: serde_json::Map<String, Value> = names
        .iter()
        .zip(&f.sigma)
        .map(|(n, v)| (n.clone(), json!(v)))
        .collect();
    json!({
        "model": model.name(),
        "params": params,
        "sigma": sigma,
        "converged": f.converged,
        "n_iterations": f.n_iterations,
        "residual_norm": f.residual_norm,
    })
}

/// Least-squares line `(slope, intercept, r²)`.
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}

/// `1 + noise·N(0,1)` factors in draw order.
fn noise_factors(seed: u64, noise: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            1.0 + noise * z
        })
        .collect()
}

fn inverse_square_weights(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| 1.0 / (v * v)).collect()
}

pub fn ple(cal: &Calibration, s: &PleSweep) -> Result<Output> {
    let lw = s.linewidth.unwrap_or(cal.optics.ple_linewidth);
    let norm = s.direction.iter().map(|c| c * c).sum::<f64>().sqrt();
    let dir = s.direction.map(|c| c / norm);
    let step = 2.0 * s.half_span / (s.n_points - 1) as f64;
    let detuning: Vec<f64> = (0..s.n_points)
        .map(|i| -s.half_span + step * i as f64)
        .collect();
    let zpl = cal.emitter.zpl_freq;
    let freqs: Vec<f64> = detuning.iter().map(|d| zpl + d).collect();

    let mut out = Output::default();
    let mut spectra = Csv::new(&["field_t", "detuning_hz", "intensity"]);
    let mut lines = Csv::new(&[
        "field_t",
        "label",
        "detuning_hz",
        "relative_strength",
        "spin_conserving",
    ]);
    let mut split = Csv::new(&["field_t", "fitted_splitting_hz", "model_splitting_hz"]);
    let mut waterfall = Plot::new(
        "PLE versus field",
        "laser detuning (GHz)",
        "intensity + offset",
    );
    let mut fits = Vec::new();
    let mut fitted_pts = Vec::new();
    let mut model_pts = Vec::new();
    let mut zero_field_fwhm = None;

    for (k, &b) in s.fields.iter().enumerate() {
        let field = FieldConfig {
            b_crystal: dir.map(|c| c * b),
            defect_axis: cal.field.defect_axis,
        };
        let table = transitions_at(&cal.emitter, &field)?;
        let y = pbv_core::emitter::ple_spectrum(&table, lw, &freqs, s.populations)?;
        for (d, v) in detuning.iter().zip(&y) {
            spectra.row(vec![b.into(), (*d).into(), (*v).into()]);
        }
        for t in &table.entries {
            lines.row(vec![
                b.into(),
                t.label.to_string().into(),
                (t.frequency - zpl).into(),
                t.relative_strength.into(),
                t.spin_conserving.into(),
            ]);
        }
        let model_split = table.spin_conserving_splitting();
        let peak = y.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        waterfall.series.push(Series::line(
            if k == 0 || k + 1 == s.fields.len() {
                format!("{b} T")
            } else {
                String::new()
            },
            detuning
                .iter()
                .zip(&y)
                .map(|(d, v)| (d * 1e-9, v / peak + 0.5 * k as f64))
                .collect(),
        ));

        let (fitted_split, fit_value) = if b == 0.0 {
            let model = ModelSpec::Lorentzian;
            let f = fit_auto(&model, &detuning, &y)?;
            zero_field_fwhm = Some(f.params[1]);
            (0.0, fit_json(&model, &f))
        } else {
            let model = ModelSpec::MultiLorentzian { peaks: 2 };
            let mut init = Vec::with_capacity(7);
            for label in [
                pbv_core::emitter::TransitionLabel::A1,
                pbv_core::emitter::TransitionLabel::B2,
            ] {
                let t = table.get(label);
                let w = s.populations[label.ground()] * t.relative_strength;
                init.extend([t.frequency - zpl, lw, w * std::f64::consts::PI * lw / 2.0]);
            }
            init.push(0.0);
            let f = fit(&model, &detuning, &y, &vec![1.0; y.len()], &init)?;
            ((f.params[0] - f.params[3]).abs(), fit_json(&model, &f))
        };
        split.row(vec![b.into(), fitted_split.into(), model_split.into()]);
        fitted_pts.push((b, fitted_split));
        model_pts.push((b, model_split));
        fits.push(json!({ "field_t": b, "fit": fit_value, "fitted_splitting_hz": fitted_split }));
    }

    let mut report =
        json!({ "linewidth_hz": lw, "fits": fits, "zero_field_fwhm_hz": zero_field_fwhm });
    if fitted_pts.len() >= 2 {
        let (slope, intercept, r2) = line_fit(&fitted_pts);
        let (model_slope, _, _) = line_fit(&model_pts);
        report["splitting_slope_hz_per_t"] = json!(slope);
        report["splitting_intercept_hz"] = json!(intercept);
        report["splitting_r2"] = json!(r2);
        report["model_splitting_slope_hz_per_t"] = json!(model_slope);
    }
    out.report = report;
    out.table("ple.csv", spectra);
    out.table("ple_transitions.csv", lines);
    out.table("ple_splitting.csv", split);
    out.figure("ple.svg", waterfall);
    out.figure(
        "ple_splitting.svg",
        Plot::new("Spin-conserving splitting", "field (T)", "splitting (GHz)")
            .with(Series::points(
                "fit",
                fitted_pts.iter().map(|(b, v)| (*b, v * 1e-9)).collect(),
            ))
            .with(Series::line(
                "model",
                model_pts.iter().map(|(b, v)| (*b, v * 1e-9)).collect(),
            )),
    );
    Ok(out)
}

pub fn init(cal: &Calibration, s: &InitSweep) -> Result<Output> {
    let power = s.power.unwrap_or(cal.optics.init_power);
    let temperature = s
        .temperature
        .unwrap_or(cal.temperature.operating_temperature);
    let model = cal.rate_model(temperature)?;
    let r = simulate_initialization(&model, PulseTarget::B2, power, s.duration, s.bin_width)?;
    let spec = ModelSpec::MonoExponential;
    let f = fit_auto(&spec, &r.times, &r.counts)?;
    let mut csv = Csv::new(&["time_s", "counts"]);
    for (t, c) in r.times.iter().zip(&r.counts) {
        csv.row(vec![(*t).into(), (*c).into()]);
    }
    let predicted = initialization_rate(power, model.p_sat, model.gamma_rad, model.eta);
    let mut out = Output::new(json!({
        "power_w": power,
        "temperature_k": temperature,
        "eta": model.eta,
        "fit": fit_json(&spec, &f),
        "fitted_rate_per_s": 1.0 / f.params[1],
        "model_initialization_rate_per_s": predicted,
        "fidelity": r.fidelity,
        "steady_state_fidelity": r.steady_state_fidelity,
        "contrast_fidelity": r.contrast_fidelity,
        "final_populations": r.final_populations,
    }));
    let curve: Vec<(f64, f64)> = r
        .times
        .iter()
        .map(|&t| (t * 1e3, spec.evaluate(&f.params, t)))
        .collect();
    out.table("init.csv", csv);
    out.figure(
        "init.svg",
        Plot::new(
            "Initialization transient (B2)",
            "time (ms)",
            "counts per bin",
        )
        .with(Series::points(
            "simulated",
            r.times
                .iter()
                .zip(&r.counts)
                .map(|(t, c)| (t * 1e3, *c))
                .collect(),
        ))
        .with(Series::line("fit", curve)),
    );
    Ok(out)
}

pub fn saturation(cal: &Calibration, s: &SaturationSweep, seed: Option<u64>) -> Result<Output> {
    let eta = cal.eta()?;
    let gamma = cal.emitter.gamma_rad;
    let truth: Vec<f64> = s
        .powers
        .iter()
        .map(|&p| initialization_rate(p, cal.optics.p_sat, gamma, eta))
        .collect();
    let factors = match seed {
        Some(seed) if s.noise > 0.0 => noise_factors(seed, s.noise, truth.len()),
        _ => vec![1.0; truth.len()],
    };
    let measured: Vec<f64> = truth.iter().zip(&factors).map(|(t, f)| t * f).collect();
    let spec = ModelSpec::SaturationRate { gamma_rad: gamma };
    let init = profile_initializer(&spec, &s.powers, &measured)?;
    let f = fit(
        &spec,
        &s.powers,
        &measured,
        &inverse_square_weights(&measured),
        &init,
    )?;

    let mut csv = Csv::new(&["power_w", "rate_model", "rate_measured", "rate_fit"]);
    for ((p, t), m) in s.powers.iter().zip(&truth).zip(&measured) {
        csv.row(vec![
            (*p).into(),
            (*t).into(),
            (*m).into(),
            spec.evaluate(&f.params, *p).into(),
        ]);
    }
    let mut out = Output::new(json!({
        "noise": s.noise,
        "fit": fit_json(&spec, &f),
        "p_sat_w": f.params[0],
        "eta": f.params[1],
        "model_p_sat_w": cal.optics.p_sat,
        "model_eta": eta,
    }));
    out.table("saturation.csv", csv);
    let mut plot = Plot::new(
        "Initialization rate versus power",
        "B2 power (W)",
        "rate (1/s)",
    )
    .with(Series::points(
        "synthetic",
        s.powers
            .iter()
            .cloned()
            .zip(measured.iter().cloned())
            .collect(),
    ))
    .with(Series::line(
        "fit",
        s.powers
            .iter()
            .map(|&p| (p, spec.evaluate(&f.params, p)))
            .collect(),
    ));
    plot.log_x = true;
    out.figure("saturation.svg", plot);
    Ok(out)
}

/// Analytic pmf over `0..=n_max`, growing `n_max` until the tail is negligible.
fn pmf_with_tail(mut n_max: u32, f: impl Fn(u32) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    loop {
        match f(n_max) {
            Err(Error::TailMass { .. }) if n_max < 100_000 => n_max *= 2,
            other => return other,
        }
    }
}

pub fn ssr(cal: &Calibration, s: &SsrSweep, seed: u64) -> Result<Output> {
    let cfg = cal.ssr_config(s.n_repeats, seed);
    let run = simulate_ssr_run(&cfg)?;
    let readout = CountHistogram::from_counts(&run.readout);
    let dark = CountHistogram::from_counts(&run.dark);
    let at_threshold = classify_fidelity(&readout, &dark, s.threshold)?;
    let best = optimal_threshold(&readout, &dark)?;
    let top = readout.max_count().max(dark.max_count()).max(20);
    let (r, k, w, d, b) = (
        cfg.detected_rate,
        cfg.flip_rate_readout,
        cfg.readout_duration,
        cfg.dark_duration,
        cfg.background_rate,
    );
    let readout_pmf = pmf_with_tail(top, |n| analytic_count_pmf(r, k, w, b, n))?;
    let dark_pmf = pmf_with_tail(top, |n| analytic_dark_pmf(r, k, w, d, b, n))?;
    let analytic = ssr_observables(r, k, w, d, b);

    let n = readout_pmf.len().max(dark_pmf.len());
    let rf = readout.frequencies(n as u32 - 1);
    let df = dark.frequencies(n as u32 - 1);
    let mut csv = Csv::new(&[
        "photons",
        "readout_fraction",
        "dark_fraction",
        "readout_pmf",
        "dark_pmf",
    ]);
    for i in 0..n {
        csv.row(vec![
            i.into(),
            rf[i].into(),
            df[i].into(),
            readout_pmf.get(i).copied().unwrap_or(0.0).into(),
            dark_pmf.get(i).copied().unwrap_or(0.0).into(),
        ]);
    }
    let mut out = Output::new(json!({
        "n_repeats": s.n_repeats,
        "seed": seed,
        "mean_readout": readout.mean,
        "mean_dark": dark.mean,
        "fidelity": at_threshold,
        "optimal": best,
        "analytic": analytic,
        "tv_readout": tv_distance(&readout, &readout_pmf),
        "tv_dark": tv_distance(&dark, &dark_pmf),
    }));
    out.table("ssr_histogram.csv", csv);
    let shown = (readout.max_count().max(dark.max_count()) as usize + 1).min(n);
    let pts = |v: &[f64]| -> Vec<(f64, f64)> {
        v.iter()
            .take(shown)
            .enumerate()
            .map(|(i, p)| (i as f64, *p))
            .collect()
    };
    out.figure(
        "ssr.svg",
        Plot::new(
            "Single-shot readout",
            "detected photons",
            "fraction of shots",
        )
        .with(Series::points("readout", pts(&rf)))
        .with(Series::points("dark", pts(&df)))
        .with(Series::line("readout pmf", pts(&readout_pmf)))
        .with(Series::line("dark pmf", pts(&dark_pmf))),
    );
    Ok(out)
}

pub fn t1(cal: &Calibration, s: &T1Sweep, seed: Option<u64>) -> Result<Output> {
    let temperature = s
        .temperature
        .unwrap_or(cal.temperature.operating_temperature);
    let model = cal.rate_model(temperature)?;
    let protocol = T1Protocol::standard(cal.optics.p_sat);
    let counts = simulate_t1_sequence(&model, &protocol, &s.delays)?;
    let exp = ModelSpec::MonoExponential;
    let recovery = fit_auto(&exp, &s.delays, &counts)?;

    let tm = cal.temperature.model;
    let truth: Vec<f64> = s
        .temperatures
        .iter()
        .map(|&t| cal.spin_flip_rate(t))
        .collect();
    let factors = match seed {
        Some(seed) if s.rate_noise > 0.0 => noise_factors(seed, s.rate_noise, truth.len()),
        _ => vec![1.0; truth.len()],
    };
    let measured: Vec<f64> = truth.iter().zip(&factors).map(|(t, f)| t * f).collect();
    let w = inverse_square_weights(&measured);
    let orbach = ModelSpec::Orbach {
        delta_gs: tm.delta_gs,
    };
    let orbach_init = profile_initializer(&orbach, &s.temperatures, &measured)?;
    let orbach_fit = fit(&orbach, &s.temperatures, &measured, &w, &orbach_init)?;
    let combined = ModelSpec::OrbachRaman {
        delta_gs: tm.delta_gs,
        alpha: tm.alpha,
    };
    let combined_init = profile_initializer(&combined, &s.temperatures, &measured)?;
    let combined_fit = fit(&combined, &s.temperatures, &measured, &w, &combined_init)?;

    let mut curve = Csv::new(&["delay_s", "counts"]);
    for (d, c) in s.delays.iter().zip(&counts) {
        curve.row(vec![(*d).into(), (*c).into()]);
    }
    let mut rates = Csv::new(&[
        "temperature_k",
        "rate_model",
        "rate_measured",
        "orbach_fit",
        "orbach_raman_fit",
    ]);
    for ((t, tr), m) in s.temperatures.iter().zip(&truth).zip(&measured) {
        rates.row(vec![
            (*t).into(),
            (*tr).into(),
            (*m).into(),
            orbach.evaluate(&orbach_fit.params, *t).into(),
            combined.evaluate(&combined_fit.params, *t).into(),
        ]);
    }
    let mut out = Output::new(json!({
        "temperature_k": temperature,
        "protocol": protocol,
        "recovery_fit": fit_json(&exp, &recovery),
        "t1_fit_s": recovery.params[1],
        "t1_model_s": 1.0 / cal.spin_flip_rate(temperature),
        "rate_noise": s.rate_noise,
        "orbach_fit": fit_json(&orbach, &orbach_fit),
        "orbach_alpha": orbach_fit.params[1],
        "orbach_raman_fit": fit_json(&combined, &combined_fit),
        "orbach_raman_t1_s": 1.0 / combined.evaluate(&combined_fit.params, temperature),
    }));
    out.table("t1.csv", curve);
    out.table("t1_rates.csv", rates);
    out.figure(
        "t1.svg",
        Plot::new(
            &format!("T1 recovery at {temperature} K"),
            "delay (ms)",
            "probe counts",
        )
        .with(Series::points(
            "simulated",
            s.delays
                .iter()
                .zip(&counts)
                .map(|(d, c)| (d * 1e3, *c))
                .collect(),
        ))
        .with(Series::line(
            "fit",
            s.delays
                .iter()
                .map(|&d| (d * 1e3, exp.evaluate(&recovery.params, d)))
                .collect(),
        )),
    );
    let fine: Vec<f64> = {
        let (lo, hi) = s
            .temperatures
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &t| (a.min(t), b.max(t)));
        (0..=100)
            .map(|i| lo + (hi - lo) * i as f64 / 100.0)
            .collect()
    };
    out.figure(
        "t1_rates.svg",
        Plot::new("Spin relaxation rate", "temperature (K)", "1/T1 (1/s)")
            .with(Series::points(
                "synthetic",
                s.temperatures
                    .iter()
                    .cloned()
                    .zip(measured.iter().cloned())
                    .collect(),
            ))
            .with(Series::line(
                "Orbach only",
                fine.iter()
                    .map(|&t| (t, orbach.evaluate(&orbach_fit.params, t)))
                    .collect(),
            ))
            .with(Series::line(
                "Orbach + Raman",
                fine.iter()
                    .map(|&t| (t, combined.evaluate(&combined_fit.params, t)))
                    .collect(),
            )),
    );
    Ok(out)
}

pub fn cpt(cal: &Calibration, s: &CptSweep) -> Result<Output> {
    let template = cal.lambda_system()?;
    let rabi = cal.rabi();
    let q = template.qubit_freq;
    let mut spectra = Csv::new(&["power_w", "raman_offset_hz", "detuning_hz", "fluorescence"]);
    let mut widths = Csv::new(&[
        "power_w",
        "fwhm_hz",
        "fwhm_sigma_hz",
        "center_hz",
        "grid_step_hz",
    ]);
    let mut plot = Plot::new(
        "CPT dip versus power",
        "two-photon detuning (MHz)",
        "normalized fluorescence",
    );
    let mut series = Vec::new();
    let mut dips = Vec::new();
    for &power in &s.powers {
        let (omega_pump, omega_probe) = rabi.split(power);
        let sys = LambdaSystem {
            omega_pump,
            omega_probe,
            ..template
        };
        let grid = raman_grid(&sys, s.half_span_widths, s.n_points);
        let at_power = |e: Error| Error::FitAtPower {
            power,
            source: Box::new(e),
        };
        let y = cpt_spectrum(&sys, &grid).map_err(at_power)?;
        let f = fit_dip(&grid, &y).map_err(at_power)?;
        if !f.converged {
            return Err(at_power(Error::InvalidInput(
                "dip fit did not converge".into(),
            )));
        }
        for (g, v) in grid.iter().zip(&y) {
            spectra.row(vec![power.into(), (*g).into(), (g - q).into(), (*v).into()]);
        }
        let step = grid[1] - grid[0];
        widths.row(vec![
            power.into(),
            f.params[1].into(),
            f.sigma[1].into(),
            f.params[0].into(),
            step.into(),
        ]);
        let peak = y.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        plot.series.push(Series::line(
            format!("{} pW", power * 1e12),
            grid.iter()
                .zip(&y)
                .map(|(g, v)| ((g - q) * 1e-6, v / peak))
                .collect(),
        ));
        series.push(LinewidthPoint {
            power,
            fwhm: f.params[1],
            fwhm_sigma: f.sigma[1],
        });
        dips.push(json!({
            "power_w": power,
            "fit": fit_json(&ModelSpec::DipLorentzian, &f),
            "center_offset_hz": f.params[0] - q,
            "grid_step_hz": step,
        }));
    }
    let mut out = Output::default();
    let t2 = if series.len() >= 3 {
        Some(extract_t2star(&series)?)
    } else {
        None
    };
    out.report = json!({
        "qubit_frequency_hz": q,
        "intrinsic_fwhm_hz": intrinsic_fwhm(&template),
        "gamma_dephasing": template.gamma_dephasing,
        "gamma_spin": template.gamma_spin,
        "dips": dips,
        "t2star": t2,
    });
    out.table("cpt_spectra.csv", spectra);
    out.table("cpt_linewidth.csv", widths);
    out.figure("cpt_spectra.svg", plot);
    let mut lw = Plot::new(
        "CPT linewidth versus power",
        "total power (pW)",
        "FWHM (MHz)",
    )
    .with(Series::points(
        "fit",
        series
            .iter()
            .map(|p| (p.power * 1e12, p.fwhm * 1e-6))
            .collect(),
    ));
    if let Some(t) = &t2 {
        let pmax = series.iter().map(|p| p.power).fold(0.0, f64::max);
        lw = lw.with(Series::line(
            "extrapolation",
            vec![
                (0.0, t.zero_power_fwhm * 1e-6),
                (pmax * 1e12, (t.zero_power_fwhm + t.slope * pmax) * 1e-6),
            ],
        ));
    }
    out.figure("cpt_linewidth.svg", lw);
    Ok(out)
}

pub fn calibrate_run(base: &Calibration, s: &CalibrateSweep) -> Result<Output> {
    let report = calibrate(base, &s.targets, &s.free_params)?;
    let mut csv = Csv::new(&["target", "value", "achieved", "relative_residual"]);
    for r in &report.residuals {
        csv.row(vec![
            Cell::Text(r.name.clone()),
            r.target.value().into(),
            r.achieved.into(),
            r.relative_residual.into(),
        ]);
    }
    let mut out = Output::default();
    out.documents.push((
        "calibration.json".into(),
        serde_json::to_value(&report.calibration)?,
    ));
    out.figure(
        "calibrate.svg",
        Plot::new("Calibration residuals", "target index", "relative residual").with(
            Series::points(
                "",
                report
                    .residuals
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (i as f64, r.relative_residual))
                    .collect(),
            ),
        ),
    );
    out.report = serde_json::to_value(&report)?;
    out.table("calibrate_residuals.csv", csv);
    Ok(out)
}

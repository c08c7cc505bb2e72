//! Damped least-squares (Levenberg–Marquardt) engine.
//!
//! Minimizes `Σ wᵢ (yᵢ − f(θ, xᵢ))²` with a forward-difference Jacobian,
//! Marquardt diagonal scaling and projection onto the parameter box after
//! every trial step. Only steps that lower the cost are accepted, so the
//! cost history is non-increasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::models::{Bounds, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub ftol: f64,
    /// Stop when the relative parameter step falls below this.
    pub xtol: f64,
    /// Scaled-gradient (cosine) threshold used both to stop and to certify convergence.
    pub gtol: f64,
    /// Relative forward-difference step.
    pub fd_step: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            ftol: 1e-10,
            xtol: 1e-10,
            gtol: 1e-10,
            fd_step: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// 1σ from the linearized covariance scaled by the reduced chi-square.
    pub sigma: Vec<f64>,
    /// `sqrt(Σ wᵢ rᵢ²)` at `params`.
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Weighted cost `Σ wᵢ rᵢ²` after the initial point and each accepted step.
    pub cost_history: Vec<f64>,
}

/// Forward-difference step for one parameter.
pub fn fd_step(value: f64, rel: f64) -> f64 {
    if value != 0.0 {
        rel * value.abs()
    } else {
        rel
    }
}

/// Forward-difference Jacobian of the model values, `J[i][j] = ∂f(xᵢ)/∂θⱼ`.
pub fn forward_jacobian(model: &dyn Model, params: &[f64], x: &[f64], rel: f64) -> DMatrix<f64> {
    let bounds = model.bounds();
    let base: Vec<f64> = x.iter().map(|&xi| model.evaluate(params, xi)).collect();
    let mut jac = DMatrix::zeros(x.len(), params.len());
    let mut shifted = params.to_vec();
    for j in 0..params.len() {
        let mut h = model.fd_step(params, j, rel);
        // step backwards when the forward point would leave the box
        if params[j] + h > bounds[j].hi {
            h = -h;
        }
        shifted[j] = params[j] + h;
        let h_eff = shifted[j] - params[j];
        for (i, &xi) in x.iter().enumerate() {
            jac[(i, j)] = (model.evaluate(&shifted, xi) - base[i]) / h_eff;
        }
        shifted[j] = params[j];
    }
    jac
}

struct Problem<'a> {
    model: &'a dyn Model,
    x: &'a [f64],
    y: &'a [f64],
    sqrt_w: Vec<f64>,
    bounds: Vec<Bounds>,
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y)
                .zip(&self.sqrt_w)
                .map(|((&xi, &yi), &sw)| sw * (yi - self.model.evaluate(p, xi))),
        )
    }

    fn cost(&self, p: &[f64]) -> f64 {
        let c = self.residuals(p).norm_squared();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    fn weighted_jacobian(&self, p: &[f64], rel: f64) -> DMatrix<f64> {
        let mut j = forward_jacobian(self.model, p, self.x, rel);
        for (i, sw) in self.sqrt_w.iter().enumerate() {
            j.row_mut(i).scale_mut(*sw);
        }
        j
    }

    fn project(&self, p: &mut [f64]) {
        for (v, b) in p.iter_mut().zip(&self.bounds) {
            *v = b.project(*v);
        }
    }

    /// Largest cosine between the residual and a Jacobian column, ignoring
    /// parameters pinned at a bound with the gradient pointing outward.
    fn scaled_gradient(&self, p: &[f64], jac: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
        let rnorm = r.norm();
        if rnorm == 0.0 {
            return 0.0;
        }
        let g = jac.transpose() * r;
        let mut worst: f64 = 0.0;
        for j in 0..p.len() {
            let cnorm = jac.column(j).norm();
            if cnorm == 0.0 {
                continue;
            }
            // descent direction for θⱼ is +gⱼ
            let b = &self.bounds[j];
            if (p[j] <= b.lo && g[j] < 0.0) || (p[j] >= b.hi && g[j] > 0.0) {
                continue;
            }
            worst = worst.max(g[j].abs() / (cnorm * rnorm));
        }
        worst
    }
}

/// Fit with default options.
pub fn fit(
    model: &dyn Model,
    x: &[f64],
    y: &[f64],
    weights: &[f64],
    init: &[f64],
) -> Result<FitResult> {
    fit_with(model, x, y, weights, init, &FitOptions::default())
}

pub fn fit_with(
    model: &dyn Model,
    x: &[f64],
    y: &[f64],
    weights: &[f64],
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let m = model.n_params();
    if init.len() != m {
        return Err(Error::invalid(format!(
            "{}: expected {m} initial parameters, got {}",
            model.name(),
            init.len()
        )));
    }
    if x.len() != y.len() || x.len() != weights.len() {
        return Err(Error::invalid(format!(
            "length mismatch: x {}, y {}, weights {}",
            x.len(),
            y.len(),
            weights.len()
        )));
    }
    if x.len() < m {
        return Err(Error::invalid(format!(
            "{} data points cannot constrain {m} parameters",
            x.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::invalid("data contain non-finite values"));
    }
    let bounds = model.bounds();
    for (j, (v, b)) in init.iter().zip(&bounds).enumerate() {
        if !b.contains(*v) {
            return Err(Error::invalid(format!(
                "{}: initial parameter {j} = {v} outside [{}, {}]",
                model.name(),
                b.lo,
                b.hi
            )));
        }
    }

    let problem = Problem {
        model,
        x,
        y,
        sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
        bounds,
    };

    let mut p = init.to_vec();
    let mut cost = problem.cost(&p);
    if !cost.is_finite() {
        return Err(Error::invalid(format!(
            "{}: model is not finite at the initial parameters",
            model.name()
        )));
    }
    let data_scale: f64 = y
        .iter()
        .zip(&problem.sqrt_w)
        .map(|(yi, sw)| (sw * yi).powi(2))
        .sum();
    let floor = 1e-28 * data_scale.max(f64::MIN_POSITIVE);

    let mut history = vec![cost];
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost <= floor {
            converged = true;
            break;
        }
        let jac = problem.weighted_jacobian(&p, opts.fd_step);
        let r = problem.residuals(&p);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        for j in 0..m {
            if a[(j, j)] == 0.0 {
                return Err(Error::RankDeficient(format!(
                    "{}: parameter {j} has no influence on the residuals",
                    model.name()
                )));
            }
        }
        if problem.scaled_gradient(&p, &jac, &r) <= opts.gtol {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda <= 1e16 {
            let mut damped = a.clone();
            for j in 0..m {
                damped[(j, j)] += lambda * a[(j, j)];
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&g);
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            problem.project(&mut trial);
            let trial_cost = problem.cost(&trial);
            if trial_cost < cost {
                let step: f64 = trial
                    .iter()
                    .zip(&p)
                    .map(|(t, q)| (t - q).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let pnorm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_decrease = (cost - trial_cost) / cost;
                p = trial;
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if rel_decrease < opts.ftol || step <= opts.xtol * (pnorm + opts.xtol) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent possible: a minimum within numerical resolution
            let jac = problem.weighted_jacobian(&p, opts.fd_step);
            let r = problem.residuals(&p);
            converged = cost <= floor || problem.scaled_gradient(&p, &jac, &r) <= 1e-3;
            break;
        }
        if converged {
            break;
        }
    }

    let jac = problem.weighted_jacobian(&p, opts.fd_step);
    let sigma = covariance_sigma(&jac, cost, x.len(), m).ok_or_else(|| {
        Error::RankDeficient(format!(
            "{}: normal equations are singular at the solution",
            model.name()
        ))
    })?;

    Ok(FitResult {
        params: p,
        sigma,
        residual_norm: cost.sqrt(),
        converged,
        n_iterations: iterations,
        cost_history: history,
    })
}

fn covariance_sigma(jac: &DMatrix<f64>, cost: f64, n: usize, m: usize) -> Option<Vec<f64>> {
    let a = jac.transpose() * jac;
    // equilibrate before inverting so wildly different parameter scales stay invertible
    let d: Vec<f64> = (0..m).map(|j| a[(j, j)].sqrt()).collect();
    if d.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(m, m, |i, j| a[(i, j)] / (d[i] * d[j]));
    let inv = scaled.cholesky()?.inverse();
    let chi2_red = if n > m { cost / (n - m) as f64 } else { 1.0 };
    Some(
        (0..m)
            .map(|j| (inv[(j, j)] * chi2_red).max(0.0).sqrt() / d[j])
            .collect(),
    )
}

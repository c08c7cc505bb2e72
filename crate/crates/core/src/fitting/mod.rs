//! Nonlinear least squares and the model zoo used by every analysis.

mod init;
mod lm;
mod models;

pub use init::profile_initializer;
pub use lm::{fd_step, fit, fit_with, forward_jacobian, FitOptions, FitResult};
pub use models::{
    bose_factor, lorentzian_density, lorentzian_unit, Bounds, FnModel, Model, ModelSpec,
};

/// Initialize from the data, then fit with uniform weights.
pub fn fit_auto(model: &ModelSpec, x: &[f64], y: &[f64]) -> crate::Result<FitResult> {
    let init = profile_initializer(model, x, y)?;
    fit(model, x, y, &vec![1.0; x.len()], &init)
}

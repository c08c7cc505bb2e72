//! Spin-photon simulation and fitting toolkit for lead-vacancy (PbV) centers
//! in diamond.
//!
//! Units throughout: frequencies and energies in Hz, magnetic fields in T,
//! times in s, powers in W, temperatures in K. Rabi frequencies and
//! detunings inside the Λ-system model are angular (rad/s).

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod constants;
pub mod cpt;
pub mod dynamics;
pub mod emitter;
pub mod error;
pub mod fitting;
pub mod photon_stats;

pub use error::{Error, Result};

//! Numerical core for multi-particle Hong-Ou-Mandel experiments with atomic
//! Twin-Fock states.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. It covers:
//!
//! * [`fock`]: two-mode Fock distributions, squeezed-vacuum sources and
//!   beam-splitter rotation kernels.
//! * [`channel`]: the staged measurement-noise channel (rotation, influx,
//!   loss, calibration skew, detection blur) and its fit to counting data.
//! * [`detector`]: synthesis and calibration of per-mode camera signals.
//! * [`metrology`]: fidelities, parities, squeezing, Hellinger-distance Fisher
//!   information and scaling fits.
//! * [`entanglement`]: parity- and variance-based entanglement depth criteria
//!   and witnesses.
//! * [`stats`]: resampling, asymmetric errors, least squares and differential
//!   evolution.
#![no_std]

extern crate alloc;

pub mod channel;
pub mod detector;
pub mod entanglement;
mod error;
pub mod fock;
pub mod math;
pub mod metrology;
pub mod stats;

pub use error::{Error, Result};

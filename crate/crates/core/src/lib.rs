//! Dispersive, birefringence-based detection of atoms trapped in the
//! evanescent field of an optical nanofiber.
//!
//! The crate is organized bottom-up:
//!
//! * [`fiber_modes`] solves the HE11 mode and its evanescent intensity.
//! * [`atomic_medium`] models the multi-line dispersive phase and absorption.
//! * [`polarimetry`] propagates the Jones state and reads out `S3/S0`.
//! * [`measurement_sim`] generates noisy frequency scans and decay traces.
//! * [`inference`] fits spectra and decays and converts phases to atom numbers.
//! * [`io`] reads and writes the CSV/JSON record formats.

pub mod atomic_medium;
pub mod bessel;
pub mod constants;
pub mod fiber_modes;
pub mod inference;
pub mod io;
pub mod measurement_sim;
pub mod polarimetry;
mod quadrature;

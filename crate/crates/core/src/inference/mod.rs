//! Fits of scans and decays, and conversion of phases to atom numbers.

mod decay;
pub mod lsq;
mod spectrum;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic_medium::LineSystem;
use crate::constants::{COUPLING_ASYMMETRY, NATURAL_LINEWIDTH_MHZ, OD_PER_ATOM};
use crate::measurement_sim::EnsembleModel;

pub use decay::{fit_decay, fit_exponential, DecayChannel};
pub use lsq::{least_squares_solve, numeric_jacobian, LsqOptions, LsqSolution};
pub use spectrum::{fit_spectrum, spectrum_jacobian, spectrum_s3_model, SpectrumFitOptions, Weighting};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("non-finite residuals at parameters {parameters:?}")]
    NonFinite { parameters: Vec<f64> },
    #[error("normal equations are singular (rank deficient)")]
    RankDeficient,
    #[error("no convergence after {iterations} iterations; best parameters {best:?}")]
    NotConverged { iterations: usize, best: Vec<f64> },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("degenerate fit: {0}")]
    Degenerate(String),
}

/// Outcome of a fit. Serialized as `{params, sigmas, residual_rms,
/// converged, iterations, mask_used, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "params")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(rename = "sigmas")]
    pub uncertainties: BTreeMap<String, f64>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Excluded detuning windows `[lo, hi]` (MHz), empty for decay fits.
    pub mask_used: Vec<[f64; 2]>,
    pub points_used: usize,
    /// Set when branch continuation met a step above pi/2.
    #[serde(default)]
    pub unwrap_flagged: bool,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        Some((*self.parameters.get(name)?, *self.uncertainties.get(name)?))
    }
}

/// Per-atom calibration constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    /// mrad MHz / atom, for the phase difference.
    pub per_atom_dphi_slope: f64,
    /// mrad MHz / atom, for the parallel mode alone.
    pub per_atom_phi_par_slope: f64,
    /// Resonant optical density per atom.
    pub eta: f64,
    pub rho: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self::from_eta(OD_PER_ATOM, COUPLING_ASYMMETRY, NATURAL_LINEWIDTH_MHZ)
    }
}

impl Calibration {
    /// Slopes implied by a per-atom optical density: far from a line the
    /// parallel phase is `(N eta / 4) Gamma / detuning`.
    pub fn from_eta(eta: f64, rho: f64, gamma: f64) -> Self {
        let par = 1e3 * eta / 4.0 * gamma;
        Self {
            per_atom_dphi_slope: par * (1.0 - 1.0 / rho),
            per_atom_phi_par_slope: par,
            eta,
            rho,
        }
    }

    /// Checks `dphi = phi_par (1 - 1/rho)` within `tolerance` (mrad MHz).
    pub fn is_consistent(&self, tolerance: f64) -> bool {
        (self.per_atom_dphi_slope - self.per_atom_phi_par_slope * (1.0 - 1.0 / self.rho)).abs() <= tolerance
    }
}

/// An atom number, with a flag when the detuning is inside the near-resonant
/// region where the far-wing proportionality does not hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomEstimate {
    pub atoms: f64,
    pub near_resonance: bool,
}

/// Far-wing threshold in units of the linewidth.
pub const FAR_WING_LINEWIDTHS: f64 = 10.0;

/// `N = -dphi detuning / slope`, with the detuning taken from the F' = 5 line
/// (positive to the blue, where the phase difference is negative).
pub fn atoms_from_phase(dphi: f64, detuning: f64, cal: &Calibration) -> AtomEstimate {
    AtomEstimate {
        atoms: -dphi * detuning / (cal.per_atom_dphi_slope * 1e-3),
        near_resonance: detuning.abs() < FAR_WING_LINEWIDTHS * NATURAL_LINEWIDTH_MHZ,
    }
}

/// Like [`atoms_from_phase`] but with the far-wing contributions of every
/// line in `lines` (strengths, positions and global offset).
pub fn atoms_from_phase_lines(dphi: f64, detuning: f64, cal: &Calibration, lines: &LineSystem) -> AtomEstimate {
    let inv: f64 = lines
        .lines
        .iter()
        .map(|l| l.strength_ratio / (detuning - l.frequency_offset - lines.global_offset))
        .sum();
    let nearest = lines
        .lines
        .iter()
        .map(|l| (detuning - l.frequency_offset - lines.global_offset).abs())
        .fold(f64::INFINITY, f64::min);
    AtomEstimate {
        atoms: -dphi / (cal.per_atom_dphi_slope * 1e-3 * inv),
        near_resonance: nearest < FAR_WING_LINEWIDTHS * lines.gamma,
    }
}

/// Exact inversion of the forward model: the atom number whose noiseless
/// `S3/S0` at `detuning` equals `s3`, on the branch connected to N = 0.
/// Negative readings map to negative atom numbers.
pub fn atoms_from_s3(s3: f64, detuning: f64, model: &EnsembleModel) -> Result<f64, FitError> {
    if !(s3.abs() <= 1.0) {
        return Err(FitError::InvalidData(format!("S3/S0 = {s3} outside [-1, 1]")));
    }
    let f0 = model.s3(0.0, detuning);
    let sign = (model.s3(1.0, detuning) - f0).signum();
    if sign == 0.0 || !sign.is_finite() {
        return Err(FitError::Degenerate("no dispersive response at this detuning".into()));
    }
    let g = |n: f64| sign * (model.s3(n, detuning) - s3);
    let mut hi = 1.0;
    while g(hi) < 0.0 || g(-hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(FitError::InvalidData(format!("S3/S0 = {s3} not reachable at {detuning} MHz")));
        }
    }
    let (mut lo, mut up) = (-hi, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            up = mid;
        }
    }
    Ok(0.5 * (lo + up))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{ATOM_NUMBER, PHI_MAX_PAR};
    use proptest::prelude::*;

    #[test]
    fn calibration_identity() {
        let cal = Calibration {
            per_atom_dphi_slope: 23.0,
            per_atom_phi_par_slope: 36.0,
            eta: 0.027,
            rho: 2.8,
        };
        assert!((36.0_f64 * (1.0 - 1.0 / 2.8) - 23.142857).abs() < 1e-6);
        assert!(cal.is_consistent(1.0 + 2.0 * (1.0 - 1.0 / 2.8)));
        let derived = Calibration::from_eta(4.0 * PHI_MAX_PAR / ATOM_NUMBER, 2.8, 5.2);
        assert!((derived.per_atom_phi_par_slope - 35.55).abs() < 0.01);
        assert!((derived.per_atom_dphi_slope - 22.85).abs() < 0.01);
        assert!(derived.is_consistent(1e-12));
    }

    #[test]
    fn phase_round_trip_and_zero() {
        let cal = Calibration {
            per_atom_dphi_slope: 23.0,
            ..Calibration::default()
        };
        let dphi = -23e-3 * 1000.0 / 165.0;
        let est = atoms_from_phase(dphi, 165.0, &cal);
        assert!((est.atoms - 1000.0).abs() < 1e-9);
        assert!(!est.near_resonance);
        assert_eq!(atoms_from_phase(0.0, 165.0, &cal).atoms, 0.0);
        assert!(atoms_from_phase(0.01, 30.0, &cal).near_resonance);
    }

    #[test]
    fn full_chain_at_blue_detuning() {
        let model = EnsembleModel::default();
        let cal = Calibration::from_eta(model.eta, model.asymmetry, model.lines.gamma);
        let dphi = model.s3(1000.0, 165.0).asin();
        assert!(dphi < 0.0);
        let est = atoms_from_phase_lines(dphi, 165.0, &cal, &model.lines);
        assert!((est.atoms - 1000.0).abs() < 1.0, "{}", est.atoms);
        let exact = atoms_from_s3(model.s3(1000.0, 165.0), 165.0, &model).unwrap();
        assert!((exact - 1000.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn phase_inversion_is_linear(dphi in -1.0f64..1.0, k in 0.1f64..10.0) {
            let cal = Calibration::default();
            let a = atoms_from_phase(dphi, 165.0, &cal).atoms;
            let b = atoms_from_phase(k * dphi, 165.0, &cal).atoms;
            prop_assert!((b - k * a).abs() <= 1e-9 * b.abs().max(1.0));
        }

        #[test]
        fn exact_inversion_round_trips(n in 0.0f64..3000.0, detuning in prop_oneof![70.0f64..200.0, -140.0f64..-70.0]) {
            let model = EnsembleModel::default();
            let s3 = model.s3(n, detuning);
            let back = atoms_from_s3(s3, detuning, &model).unwrap();
            prop_assert!((back - n).abs() < 1e-8 * n.max(1.0));
        }
    }
}

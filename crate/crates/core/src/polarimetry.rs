//! Polarization of the probe in the (parallel, perpendicular) eigenmode basis
//! and its circular-analyzer readout.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic_medium::OpticalResponse;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarimetryError {
    #[error("state carries no power; S3/S0 is undefined")]
    ZeroPower,
    #[error("|S3/S0| = {0} exceeds 1")]
    OutOfDomain(f64),
    #[error("coupling asymmetry must exceed 1, got {0}")]
    InvalidAsymmetry(f64),
    #[error("amplitude transmission must lie in (0, 1], got {0}")]
    InvalidTransmission(f64),
}

/// Complex field amplitudes (sqrt(W)) of the two eigenmodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesState {
    pub amp_par: Complex64,
    pub amp_perp: Complex64,
}

impl JonesState {
    /// Linear polarization at 45 degrees to the atom plane carrying `power`.
    pub fn balanced(power: f64) -> Self {
        let a = Complex64::new((0.5 * power).sqrt(), 0.0);
        Self {
            amp_par: a,
            amp_perp: a,
        }
    }

    pub fn power(&self) -> f64 {
        self.amp_par.norm_sqr() + self.amp_perp.norm_sqr()
    }

    /// Powers behind the sigma+ and sigma- analyzer ports. The analyzer
    /// handedness is the one for which a leading parallel-mode phase gives
    /// positive S3.
    pub fn circular_powers(&self) -> (f64, f64) {
        let i = Complex64::i();
        let plus = (self.amp_par + i * self.amp_perp).norm_sqr() / 2.0;
        let minus = (self.amp_par - i * self.amp_perp).norm_sqr() / 2.0;
        (plus, minus)
    }

    pub fn stokes(&self) -> StokesVector {
        let (a, b) = (self.amp_par, self.amp_perp);
        let (plus, minus) = self.circular_powers();
        StokesVector {
            s0: self.power(),
            s1: a.norm_sqr() - b.norm_sqr(),
            s2: 2.0 * (a * b.conj()).re,
            s3: plus - minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn normalized(&self) -> Option<[f64; 3]> {
        (self.s0 > 0.0).then(|| [self.s1 / self.s0, self.s2 / self.s0, self.s3 / self.s0])
    }

    pub fn degree_of_polarization(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt() / self.s0
    }
}

/// Applies the ensemble's per-mode transmission and phase.
pub fn propagate(input: &JonesState, response: &OpticalResponse) -> JonesState {
    propagate_with_residual(input, response, 0.0)
}

/// As [`propagate`], with an additional residual birefringence phase added to
/// the parallel mode (uncompensated fiber birefringence).
pub fn propagate_with_residual(input: &JonesState, response: &OpticalResponse, residual_phase: f64) -> JonesState {
    JonesState {
        amp_par: input.amp_par * Complex64::from_polar(response.t_par, response.phi_par + residual_phase),
        amp_perp: input.amp_perp * Complex64::from_polar(response.t_perp, response.phi_perp),
    }
}

/// Normalized `S3/S0 = (P+ - P-)/(P+ + P-)` from the analyzer port powers.
pub fn stokes_s3(output: &JonesState) -> Result<f64, PolarimetryError> {
    let (plus, minus) = output.circular_powers();
    let total = plus + minus;
    if !(total > 0.0) {
        return Err(PolarimetryError::ZeroPower);
    }
    Ok((plus - minus) / total)
}

/// Closed form `2 t_par t_perp sin(dphi) / (t_par^2 + t_perp^2)` for a balanced input.
pub fn s3_closed_form(response: &OpticalResponse) -> f64 {
    let (a, b) = (response.t_par, response.t_perp);
    2.0 * a * b / (a * a + b * b) * response.phase_difference().sin()
}

/// `S3/S0` for a balanced input written through the log-transmission
/// contrast: `sech(ln t_par - ln t_perp) sin(dphi)`.
pub fn s3_from_contrast(log_contrast: f64, phase_difference: f64) -> f64 {
    phase_difference.sin() / log_contrast.cosh()
}

fn check_asymmetry(asymmetry: f64) -> Result<(), PolarimetryError> {
    if asymmetry > 1.0 && asymmetry.is_finite() {
        Ok(())
    } else {
        Err(PolarimetryError::InvalidAsymmetry(asymmetry))
    }
}

/// Phase-difference to parallel-phase factor `(1 - 1/rho)^-1`.
pub fn parallel_phase_factor(asymmetry: f64) -> Result<f64, PolarimetryError> {
    check_asymmetry(asymmetry)?;
    Ok(1.0 / (1.0 - 1.0 / asymmetry))
}

/// Parallel-mode phase from a measured `S3/S0`, taking the unit prefactor and
/// the principal branch of arcsin.
pub fn extract_phi_par(s3_over_s0: f64, asymmetry: f64) -> Result<f64, PolarimetryError> {
    let factor = parallel_phase_factor(asymmetry)?;
    if !(s3_over_s0.abs() <= 1.0) {
        return Err(PolarimetryError::OutOfDomain(s3_over_s0));
    }
    Ok(factor * s3_over_s0.asin())
}

/// Relative error `1 - 2 t_par t_perp/(t_par^2 + t_perp^2)` of the unit
/// prefactor, with `t_perp = t_par^(1/rho)`.
pub fn prefactor_error(t_par: f64, asymmetry: f64) -> Result<f64, PolarimetryError> {
    check_asymmetry(asymmetry)?;
    if !(t_par > 0.0 && t_par <= 1.0) {
        return Err(PolarimetryError::InvalidTransmission(t_par));
    }
    let t_perp = t_par.powf(1.0 / asymmetry);
    Ok(1.0 - 2.0 * t_par * t_perp / (t_par * t_par + t_perp * t_perp))
}

/// Result of branch continuation along a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Unwrapped {
    pub values: Vec<f64>,
    /// Set when any consecutive step exceeds pi/2.
    pub flagged: bool,
}

/// Continues principal-branch arcsin values along a monotone scan. Each
/// point takes the branch (`a + 2 pi k` or `pi - a + 2 pi k`) nearest to the
/// linear extrapolation of the previous two points.
pub fn unwrap_arcsin(principal: &[f64]) -> Unwrapped {
    use std::f64::consts::{FRAC_PI_2, PI, TAU};
    let mut values: Vec<f64> = Vec::with_capacity(principal.len());
    let mut flagged = false;
    for &a in principal {
        let prediction = match values.len() {
            0 => {
                values.push(a);
                continue;
            }
            1 => values[0],
            n => 2.0 * values[n - 1] - values[n - 2],
        };
        let nearest = |base: f64| base + TAU * ((prediction - base) / TAU).round();
        let c1 = nearest(a);
        let c2 = nearest(PI - a);
        let pick = if (c1 - prediction).abs() <= (c2 - prediction).abs() { c1 } else { c2 };
        let last = *values.last().expect("non-empty");
        if (pick - last).abs() > FRAC_PI_2 {
            flagged = true;
        }
        values.push(pick);
    }
    Unwrapped { values, flagged }
}

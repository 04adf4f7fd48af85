//! Exact HE11 mode of a step-index nanofiber and its evanescent intensity.
//!
//! The fundamental hybrid mode is found from the full vector eigenvalue
//! equation for azimuthal order one,
//!
//! ```text
//! [J1'(u)/(u J1(u)) + K1'(w)/(w K1(w))] [n1^2 J1'(u)/(u J1(u)) + n2^2 K1'(w)/(w K1(w))]
//!     = (beta/k)^2 (1/u^2 + 1/w^2)^2,        u = h a,  w = q a
//! ```
//!
//! Circularly polarized fields are written with the usual hybrid-mode
//! parameter `s`; the quasi-linear modes are their balanced superpositions.
//! The field amplitude is fixed by integrating the axial Poynting flux so
//! that the mode carries 1 W.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bessel;
use crate::constants::{
    ATOM_SURFACE_DISTANCE, EPSILON_0, FIBER_RADIUS, MU_0, PROBE_WAVELENGTH, SILICA_INDEX,
    SPEED_OF_LIGHT, VACUUM_INDEX,
};
use crate::quadrature;

const BRACKET_MARGIN: f64 = 1e-4;
const SCAN_POINTS: usize = 2000;
const ROOT_ACCEPT: f64 = 1e-8;
const POWER_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("invalid fiber geometry: {0}")]
    InvalidGeometry(String),
    #[error(
        "no HE11 root in n_eff bracket [{lower}, {upper}]: {sign_changes} sign changes, \
         best |residual| {best_residual:e}"
    )]
    SolverFailure {
        lower: f64,
        upper: f64,
        sign_changes: usize,
        best_residual: f64,
    },
    #[error("radius {r:e} m is inside the fiber (radius {radius:e} m); only the evanescent region is evaluated")]
    OutOfDomain { r: f64, radius: f64 },
    #[error("invalid atom geometry: {0}")]
    InvalidAtom(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberGeometry {
    /// m
    pub radius: f64,
    pub core_index: f64,
    pub cladding_index: f64,
    /// m
    pub wavelength: f64,
}

impl Default for FiberGeometry {
    fn default() -> Self {
        Self {
            radius: FIBER_RADIUS,
            core_index: SILICA_INDEX,
            cladding_index: VACUUM_INDEX,
            wavelength: PROBE_WAVELENGTH,
        }
    }
}

impl FiberGeometry {
    pub fn new(radius: f64, core_index: f64, cladding_index: f64, wavelength: f64) -> Result<Self, ModeError> {
        let g = Self {
            radius,
            core_index,
            cladding_index,
            wavelength,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ModeError> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(ModeError::InvalidGeometry(msg.into())) };
        ok(self.radius.is_finite() && self.radius > 0.0, "radius must be positive")?;
        ok(self.wavelength.is_finite() && self.wavelength > 0.0, "wavelength must be positive")?;
        ok(self.cladding_index >= 1.0, "cladding index must be >= 1")?;
        ok(
            self.core_index.is_finite() && self.core_index > self.cladding_index,
            "core index must exceed cladding index",
        )?;
        ok(
            self.core_index - self.cladding_index > 2.0 * BRACKET_MARGIN,
            "index contrast too small for the n_eff bracket",
        )?;
        let v = self.v_number();
        ok(v.is_finite() && v > 0.0, "V-number must be finite and positive")
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    pub fn v_number(&self) -> f64 {
        self.wavenumber() * self.radius * (self.core_index.powi(2) - self.cladding_index.powi(2)).sqrt()
    }
}

/// Position of the trapped atoms relative to the fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomGeometry {
    /// m
    pub surface_distance: f64,
    /// Angle of the atom plane relative to the parallel-mode axis (rad).
    pub azimuth_parallel: f64,
}

impl Default for AtomGeometry {
    fn default() -> Self {
        Self {
            surface_distance: ATOM_SURFACE_DISTANCE,
            azimuth_parallel: 0.0,
        }
    }
}

impl AtomGeometry {
    pub fn radial_position(&self, fiber: &FiberGeometry) -> f64 {
        fiber.radius + self.surface_distance
    }
}

/// Dimensionless coefficients of the circular HE11 field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldCoefficients {
    /// Hybrid-mode parameter `s`.
    pub s: f64,
    /// J1(ha), the common scale of the axial field at the interface.
    pub interface_j1: f64,
    /// Amplitude (V/m per sqrt(W)) that normalizes the mode to unit power.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub geometry: FiberGeometry,
    /// rad/m
    pub beta: f64,
    pub effective_index: f64,
    /// 1/m
    pub h: f64,
    /// 1/m
    pub q: f64,
    pub field_coefficients: FieldCoefficients,
}

/// Real parts of the circular-mode field at one radius: `E_r = i*radial`,
/// `E_phi = azimuthal`, `E_z = axial`, all for amplitude one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularField {
    pub radial: f64,
    pub azimuthal: f64,
    pub axial: f64,
    pub axial_dr: f64,
}

/// Azimuthal decomposition `I(r, phi) = i0 + i2 cos 2(phi - axis)`, per unit power (1/m^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthalProfile {
    pub i0: f64,
    pub i2: f64,
}

impl AzimuthalProfile {
    /// Intensity ratio along versus across the polarization axis.
    pub fn asymmetry(&self) -> f64 {
        (self.i0 + self.i2) / (self.i0 - self.i2)
    }

    pub fn at(&self, phi: f64, polarization_axis: f64) -> f64 {
        self.i0 + self.i2 * (2.0 * (phi - polarization_axis)).cos()
    }
}

/// Normalized residual `LHS/RHS - 1` of the vector eigenvalue equation at `n_eff`.
pub fn dispersion_residual(geometry: &FiberGeometry, n_eff: f64) -> f64 {
    let k = geometry.wavenumber();
    let a = geometry.radius;
    let (n1, n2) = (geometry.core_index, geometry.cladding_index);
    let u = k * a * (n1 * n1 - n_eff * n_eff).sqrt();
    let w = k * a * (n_eff * n_eff - n2 * n2).sqrt();
    let jt = bessel::j1_prime(u) / (u * bessel::j1(u));
    let (k0s, k1s) = bessel::k01_scaled(w);
    // K1'/K1 = -K0/K1 - 1/w, scaling cancels
    let kt = (-k0s / k1s - 1.0 / w) / w;
    let lhs = (jt + kt) * (n1 * n1 * jt + n2 * n2 * kt);
    let rhs = n_eff * n_eff * (1.0 / (u * u) + 1.0 / (w * w)).powi(2);
    lhs / rhs - 1.0
}

/// Solves the fundamental HE11 mode.
pub fn solve_he11(geometry: &FiberGeometry) -> Result<ModeSolution, ModeError> {
    geometry.validate()?;
    let lower = geometry.cladding_index + BRACKET_MARGIN;
    let upper = geometry.core_index - BRACKET_MARGIN;
    let f = |n: f64| dispersion_residual(geometry, n);

    let step = (upper - lower) / (SCAN_POINTS - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..SCAN_POINTS)
        .map(|i| {
            let n = lower + i as f64 * step;
            (n, f(n))
        })
        .collect();

    let mut sign_changes = 0;
    let mut best: Option<(f64, f64)> = None;
    let mut best_residual = f64::INFINITY;
    for pair in grid.windows(2) {
        let ((mut lo, mut flo), (mut hi, _)) = (pair[0], pair[1]);
        if !(flo.is_finite() && pair[1].1.is_finite()) || flo.signum() == pair[1].1.signum() {
            continue;
        }
        sign_changes += 1;
        // bisection until the bracket stops shrinking
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid);
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let (root, res) = [lo, hi]
            .into_iter()
            .map(|n| (n, f(n).abs()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("two candidates");
        best_residual = best_residual.min(res);
        // a sign flip across a pole leaves a large residual
        if res < ROOT_ACCEPT && best.is_none_or(|(n, _)| root > n) {
            best = Some((root, res));
        }
    }

    let (n_eff, _) = best.ok_or(ModeError::SolverFailure {
        lower,
        upper,
        sign_changes,
        best_residual,
    })?;
    Ok(build_solution(geometry, n_eff))
}

fn build_solution(geometry: &FiberGeometry, n_eff: f64) -> ModeSolution {
    let k = geometry.wavenumber();
    let a = geometry.radius;
    let (n1, n2) = (geometry.core_index, geometry.cladding_index);
    let beta = n_eff * k;
    let h = (n1 * n1 * k * k - beta * beta).sqrt();
    let q = (beta * beta - n2 * n2 * k * k).sqrt();
    let (u, w) = (h * a, q * a);
    let jt = bessel::j1_prime(u) / (u * bessel::j1(u));
    let (k0s, k1s) = bessel::k01_scaled(w);
    let kt = (-k0s / k1s - 1.0 / w) / w;
    let s = (1.0 / (u * u) + 1.0 / (w * w)) / (jt + kt);

    let mut mode = ModeSolution {
        geometry: *geometry,
        beta,
        effective_index: n_eff,
        h,
        q,
        field_coefficients: FieldCoefficients {
            s,
            interface_j1: bessel::j1(u),
            amplitude: 1.0,
        },
    };
    let power = mode.circular_power(POWER_REL_TOL);
    mode.field_coefficients.amplitude = 1.0 / power.sqrt();
    mode
}

impl ModeSolution {
    fn omega(&self) -> f64 {
        self.geometry.wavenumber() * SPEED_OF_LIGHT
    }

    /// Circular-mode field for amplitude one. Outside the fiber every component
    /// is multiplied by `exp(q (r - a))` so that it stays representable far
    /// from the surface; `scaled` reports whether that factor was applied.
    fn circular_field_raw(&self, r: f64) -> (CircularField, bool) {
        let a = self.geometry.radius;
        let (beta, h, q) = (self.beta, self.h, self.q);
        let s = self.field_coefficients.s;
        if r < a {
            let x = h * r;
            let (j0, j1, j2) = (bessel::j0(x), bessel::j1(x), bessel::j2(x));
            let field = CircularField {
                radial: beta / (2.0 * h) * ((1.0 - s) * j0 - (1.0 + s) * j2),
                azimuthal: -beta / (2.0 * h) * ((1.0 - s) * j0 + (1.0 + s) * j2),
                axial: j1,
                axial_dr: h * bessel::j1_prime(x),
            };
            (field, false)
        } else {
            let x = q * r;
            let (k0, k1) = bessel::k01_scaled(x);
            let k2 = k0 + 2.0 / x * k1;
            // J1(ha) / K1(qa) with both K scaled by exp(qa); the remaining
            // exp(-q(r-a)) is the factor left out
            let c = self.field_coefficients.interface_j1 / bessel::k_scaled(1, q * a);
            let field = CircularField {
                radial: beta / (2.0 * q) * c * ((1.0 - s) * k0 + (1.0 + s) * k2),
                azimuthal: -beta / (2.0 * q) * c * ((1.0 - s) * k0 - (1.0 + s) * k2),
                axial: c * k1,
                axial_dr: c * q * (-k0 - k1 / x),
            };
            (field, true)
        }
    }

    /// Circular-mode field at radius `r` for amplitude one (unscaled).
    pub fn circular_field(&self, r: f64) -> CircularField {
        let (f, scaled) = self.circular_field_raw(r);
        if !scaled {
            return f;
        }
        let damp = (-self.q * (r - self.geometry.radius)).exp();
        CircularField {
            radial: f.radial * damp,
            azimuthal: f.azimuthal * damp,
            axial: f.axial * damp,
            axial_dr: f.axial_dr * damp,
        }
    }

    /// Axial Poynting flux of the amplitude-one circular mode (W/m^2).
    fn circular_flux(&self, r: f64) -> f64 {
        let f = self.circular_field(r);
        // H from Faraday's law for fields ~ exp(i(beta z + phi - omega t))
        let h_phi = (self.beta * f.radial + f.axial_dr) / (self.omega() * MU_0);
        let h_r = (f.axial / r - self.beta * f.azimuthal) / (self.omega() * MU_0);
        0.5 * (f.radial * h_phi - f.azimuthal * h_r)
    }

    /// Guided power of the circular mode for amplitude one, by radial quadrature.
    fn circular_power(&self, rel_tol: f64) -> f64 {
        let a = self.geometry.radius;
        let integrand = |r: f64| 2.0 * std::f64::consts::PI * r * self.circular_flux(r);
        let inner = quadrature::refine(&integrand, 0.0, a, rel_tol);
        let outer = quadrature::refine(&integrand, a, a + 60.0 / self.q, rel_tol);
        inner + outer
    }

    /// Axial Poynting flux (W/m^2 per W) of the normalized quasi-linear mode.
    pub fn poynting_z(&self, r: f64, phi: f64, polarization_axis: f64) -> f64 {
        let f = self.circular_field(r);
        let w_mu = self.omega() * MU_0;
        let h_phi = (self.beta * f.radial + f.axial_dr) / w_mu;
        let h_r = (f.axial / r - self.beta * f.azimuthal) / w_mu;
        let psi = phi - polarization_axis;
        let amp2 = self.field_coefficients.amplitude.powi(2);
        amp2 * (f.radial * h_phi * psi.cos().powi(2) - f.azimuthal * h_r * psi.sin().powi(2))
    }

    /// Guided power of the normalized quasi-linear mode integrated over the
    /// cross-section with a uniform azimuthal grid of `azimuths` points.
    pub fn guided_power(&self, azimuths: usize, rel_tol: f64) -> f64 {
        let a = self.geometry.radius;
        let dphi = 2.0 * std::f64::consts::PI / azimuths as f64;
        let ring = |r: f64| {
            (0..azimuths)
                .map(|j| self.poynting_z(r, j as f64 * dphi, 0.0))
                .sum::<f64>()
                * dphi
                * r
        };
        quadrature::refine(&ring, 0.0, a, rel_tol)
            + quadrature::refine(&ring, a, a + 60.0 / self.q, rel_tol)
    }

    fn check_domain(&self, r: f64) -> Result<(), ModeError> {
        if r < self.geometry.radius || !r.is_finite() {
            return Err(ModeError::OutOfDomain {
                r,
                radius: self.geometry.radius,
            });
        }
        Ok(())
    }

    /// Intensity decomposition of the normalized quasi-linear mode at `r`.
    pub fn azimuthal_profile(&self, r: f64) -> Result<AzimuthalProfile, ModeError> {
        self.check_domain(r)?;
        let f = self.circular_field(r);
        Ok(profile_from(self, &f))
    }

    /// Azimuthal contrast along/across the polarization axis; finite at any
    /// distance because the common exponential factor cancels.
    pub fn asymmetry_at_radius(&self, r: f64) -> Result<f64, ModeError> {
        self.check_domain(r)?;
        let (f, _) = self.circular_field_raw(r);
        Ok(profile_from(self, &f).asymmetry())
    }

    /// Limit of the azimuthal contrast far from the fiber, where all K_n
    /// share the same asymptote.
    pub fn far_field_asymmetry(&self) -> f64 {
        let s = self.field_coefficients.s;
        let ratio = self.beta / self.q;
        (ratio * ratio + 1.0) / (ratio * s).powi(2)
    }
}

fn profile_from(mode: &ModeSolution, f: &CircularField) -> AzimuthalProfile {
    // |E_lin|^2 = 2 [(|E_r|^2 + |E_z|^2) cos^2 psi + |E_phi|^2 sin^2 psi]
    // times A^2, and I = c eps0 n |E|^2 / 2
    let n2 = mode.geometry.cladding_index;
    let scale = SPEED_OF_LIGHT * EPSILON_0 * n2 * mode.field_coefficients.amplitude.powi(2);
    let along = f.radial.powi(2) + f.axial.powi(2);
    let across = f.azimuthal.powi(2);
    AzimuthalProfile {
        i0: 0.5 * scale * (along + across),
        i2: 0.5 * scale * (along - across),
    }
}

/// Power-normalized intensity (1/m^2) of the quasi-linear mode with the given
/// polarization axis, evaluated at `r >= radius`.
pub fn intensity_at(mode: &ModeSolution, r: f64, phi: f64, polarization_axis: f64) -> Result<f64, ModeError> {
    Ok(mode.azimuthal_profile(r)?.at(phi, polarization_axis))
}

fn atom_radius(mode: &ModeSolution, atom: &AtomGeometry) -> Result<f64, ModeError> {
    if !(atom.surface_distance > 0.0) {
        return Err(ModeError::InvalidAtom("surface distance must be positive".into()));
    }
    Ok(atom.radial_position(&mode.geometry))
}

/// Ratio of parallel to perpendicular mode intensity at the atoms.
pub fn coupling_asymmetry(mode: &ModeSolution, atom: &AtomGeometry) -> Result<f64, ModeError> {
    let r = atom_radius(mode, atom)?;
    let phi = atom.azimuth_parallel;
    let profile = mode.azimuthal_profile(r)?;
    Ok(profile.at(phi, 0.0) / profile.at(phi, std::f64::consts::FRAC_PI_2))
}

/// Effective mode area `P / I_par(atom)` (m^2).
pub fn effective_area(mode: &ModeSolution, atom: &AtomGeometry) -> Result<f64, ModeError> {
    let r = atom_radius(mode, atom)?;
    Ok(1.0 / intensity_at(mode, r, atom.azimuth_parallel, 0.0)?)
}

/// One sample of a transverse intensity map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub x_nm: f64,
    pub y_nm: f64,
    #[serde(rename = "I_over_P_per_um2")]
    pub intensity_per_um2: f64,
}

/// Evanescent intensity on a square grid of half-width `half_width` (m) with
/// `n` points per side. Points inside the fiber are omitted.
pub fn intensity_map(mode: &ModeSolution, half_width: f64, n: usize, polarization_axis: f64) -> Vec<MapPoint> {
    let step = if n > 1 { 2.0 * half_width / (n - 1) as f64 } else { 0.0 };
    let mut out = Vec::new();
    for iy in 0..n {
        let y = -half_width + iy as f64 * step;
        for ix in 0..n {
            let x = -half_width + ix as f64 * step;
            let r = x.hypot(y);
            if let Ok(i) = intensity_at(mode, r, y.atan2(x), polarization_axis) {
                out.push(MapPoint {
                    x_nm: x * 1e9,
                    y_nm: y * 1e9,
                    intensity_per_um2: i * 1e-12,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn reference_mode() -> ModeSolution {
        solve_he11(&FiberGeometry::default()).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(FiberGeometry::new(-1e-9, 1.45, 1.0, 852e-9).is_err());
        assert!(FiberGeometry::new(250e-9, 1.0, 1.0, 852e-9).is_err());
        assert!(FiberGeometry::new(250e-9, 1.45, 0.9, 852e-9).is_err());
        assert!(FiberGeometry::new(250e-9, 1.45, 1.0, 0.0).is_err());
        assert!(matches!(
            solve_he11(&FiberGeometry { radius: f64::NAN, ..Default::default() }),
            Err(ModeError::InvalidGeometry(_))
        ));
    }

    #[test]
    fn mode_invariants() {
        let m = reference_mode();
        let g = m.geometry;
        let k = g.wavenumber();
        assert!(m.effective_index > g.cladding_index && m.effective_index < g.core_index);
        let h2 = (g.core_index * k).powi(2) - m.beta.powi(2);
        let q2 = m.beta.powi(2) - (g.cladding_index * k).powi(2);
        assert!((m.h * m.h - h2).abs() <= 1e-12 * h2);
        assert!((m.q * m.q - q2).abs() <= 1e-12 * q2);
        assert!(dispersion_residual(&g, m.effective_index).abs() < 1e-10);
        assert!((m.effective_index - m.beta / k).abs() < 1e-15);
    }

    #[test]
    fn boundary_conditions_hold_at_interface() {
        let m = reference_mode();
        let a = m.geometry.radius;
        let (n1, n2) = (m.geometry.core_index, m.geometry.cladding_index);
        let inside = m.circular_field(a * (1.0 - 1e-12));
        let outside = m.circular_field(a);
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs());
        assert!(rel(inside.axial, outside.axial) < 1e-9);
        assert!(rel(inside.azimuthal, outside.azimuthal) < 1e-9);
        assert!(rel(n1 * n1 * inside.radial, n2 * n2 * outside.radial) < 1e-9);

        // tangential H: H_phi and H_z, the latter from d(r E_phi)/dr
        let w_mu = m.omega() * MU_0;
        let h_phi = |f: &CircularField| (m.beta * f.radial + f.axial_dr) / w_mu;
        assert!(rel(h_phi(&inside), h_phi(&outside)) < 1e-9);
        let h_z = |r: f64, side: f64| {
            let d = 1e-6 * a;
            let (r0, r1) = if side < 0.0 { (r - 2.0 * d, r - d) } else { (r + d, r + 2.0 * d) };
            let g = |x: f64| x * m.circular_field(x).azimuthal;
            // second-order one-sided difference evaluated at r
            let deriv = if side < 0.0 {
                (3.0 * g(r * (1.0 - 1e-12)) - 4.0 * g(r1) + g(r0)) / (2.0 * d)
            } else {
                (-3.0 * g(r) + 4.0 * g(r0) - g(r1)) / (2.0 * d)
            };
            let f = m.circular_field(if side < 0.0 { r * (1.0 - 1e-12) } else { r });
            (deriv + f.radial) / r
        };
        assert!(rel(h_z(a, -1.0), h_z(a, 1.0)) < 1e-5);
    }

    #[test]
    fn fields_are_divergence_free() {
        let m = reference_mode();
        let a = m.geometry.radius;
        for &r in &[0.3 * a, 0.8 * a, 1.3 * a, 2.0 * a] {
            let d = 1e-5 * a;
            let g = |x: f64| x * m.circular_field(x).radial;
            let f = m.circular_field(r);
            let div = (g(r + d) - g(r - d)) / (2.0 * d) / r + f.azimuthal / r + m.beta * f.axial;
            let scale = m.beta * f.axial.abs() + f.azimuthal.abs() / r;
            assert!(div.abs() < 1e-6 * scale, "div at r={r}: {div}");
        }
    }

    #[test]
    fn power_normalization_is_unity() {
        let m = reference_mode();
        let p16 = m.guided_power(16, 1e-10);
        let p64 = m.guided_power(64, 1e-10);
        assert!((p16 - 1.0).abs() < 1e-6, "{p16}");
        assert!((p64 - p16).abs() < 1e-9);
    }

    #[test]
    fn intensity_symmetries() {
        let m = reference_mode();
        for &r in &[260e-9, 480e-9, 900e-9] {
            for &phi in &[0.0, 0.4, 1.3, 2.9] {
                let a = intensity_at(&m, r, phi, 0.0).unwrap();
                let b = intensity_at(&m, r, phi + PI, 0.0).unwrap();
                assert!((a - b).abs() <= 1e-12 * a);
                let rot = intensity_at(&m, r, phi + FRAC_PI_2, FRAC_PI_2).unwrap();
                assert!((a - rot).abs() <= 1e-12 * a);
            }
        }
    }

    #[test]
    fn intensity_decreases_with_radius() {
        let m = reference_mode();
        for &axis in &[0.0, FRAC_PI_2] {
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let r = 250e-9 + i as f64 * 5e-9;
                let v = intensity_at(&m, r, 0.0, axis).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn interior_evaluation_is_rejected() {
        let m = reference_mode();
        assert!(matches!(intensity_at(&m, 100e-9, 0.0, 0.0), Err(ModeError::OutOfDomain { .. })));
    }

    #[test]
    fn azimuthal_decomposition_is_exact() {
        let m = reference_mode();
        let r = 480e-9;
        let samples: Vec<(f64, f64)> = (0..16)
            .map(|j| {
                let phi = j as f64 * 2.0 * PI / 16.0;
                (phi, intensity_at(&m, r, phi, 0.0).unwrap())
            })
            .collect();
        // least squares onto {1, cos 2phi} with orthogonal sampling
        let c0 = samples.iter().map(|s| s.1).sum::<f64>() / 16.0;
        let c2 = samples.iter().map(|s| s.1 * (2.0 * s.0).cos()).sum::<f64>() / 8.0;
        let worst = samples
            .iter()
            .map(|&(phi, v)| (v - c0 - c2 * (2.0 * phi).cos()).abs() / v)
            .fold(0.0, f64::max);
        assert!(worst < 1e-10);
    }

    #[test]
    fn isotropic_profile_has_unit_asymmetry() {
        let p = AzimuthalProfile { i0: 3.0, i2: 0.0 };
        assert_eq!(p.asymmetry(), 1.0);
    }

    #[test]
    fn effective_area_definition_and_trend() {
        let m = reference_mode();
        let atom = AtomGeometry::default();
        let area = effective_area(&m, &atom).unwrap();
        let r = atom.radial_position(&m.geometry);
        assert!((area * intensity_at(&m, r, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let far = AtomGeometry {
            surface_distance: 2.0 * atom.surface_distance,
            ..atom
        };
        assert!(effective_area(&m, &far).unwrap() > area);
    }

    #[test]
    fn intensity_map_skips_interior() {
        let m = reference_mode();
        let map = intensity_map(&m, 1e-6, 21, 0.0);
        assert!(!map.is_empty());
        assert!(map.iter().all(|p| p.x_nm.hypot(p.y_nm) >= 250.0));
        assert!(map.len() < 21 * 21);
    }
}

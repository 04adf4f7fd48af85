//! Linear optical response of the atomic ensemble on the Cs D2 line.
//!
//! Each hyperfine line `F = 4 -> F'` contributes a complex phase
//! `-2 phi_max r / (Delta + i)`, where `r = sigma_F'/sigma_5` and
//! `Delta = 2 (nu - nu_F' - offset) / gamma` is the detuning in units of the
//! half linewidth. Its real part is the dispersive phase and its imaginary
//! part is half the optical density, so `OD_max = 4 phi_max`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{
    photon_energy, NATURAL_LINEWIDTH_MHZ, OFFSET_F3_MHZ, OFFSET_F4_MHZ, STRENGTH_F3, STRENGTH_F4,
    STRENGTH_F5,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediumError {
    #[error("invalid line system: {0}")]
    InvalidSystem(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Excited hyperfine level of the D2 line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExcitedLevel {
    F3,
    F4,
    F5,
}

impl ExcitedLevel {
    pub fn strength_ratio(self) -> f64 {
        match self {
            Self::F3 => STRENGTH_F3,
            Self::F4 => STRENGTH_F4,
            Self::F5 => STRENGTH_F5,
        }
    }

    pub fn frequency_offset(self) -> f64 {
        match self {
            Self::F3 => OFFSET_F3_MHZ,
            Self::F4 => OFFSET_F4_MHZ,
            Self::F5 => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionLine {
    pub label: ExcitedLevel,
    /// Line center relative to the F' = 5 line (MHz).
    pub frequency_offset: f64,
    /// sigma_F' / sigma_5
    pub strength_ratio: f64,
}

impl TransitionLine {
    pub fn cs_d2(label: ExcitedLevel) -> Self {
        Self {
            label,
            frequency_offset: label.frequency_offset(),
            strength_ratio: label.strength_ratio(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSystem {
    pub lines: Vec<TransitionLine>,
    /// Natural linewidth Gamma/2pi (MHz).
    pub gamma: f64,
    /// Maximum phase of the F' = 5 line alone (rad).
    pub phi_max: f64,
    /// Shift of the whole frequency axis (MHz).
    pub global_offset: f64,
}

impl LineSystem {
    /// All three lines F' = 3, 4, 5.
    pub fn cs_d2(phi_max: f64) -> Self {
        Self::with_levels(&[ExcitedLevel::F3, ExcitedLevel::F4, ExcitedLevel::F5], phi_max)
    }

    /// The two lines nearest to the probe, F' = 4 and F' = 5.
    pub fn cs_d2_nearest(phi_max: f64) -> Self {
        Self::with_levels(&[ExcitedLevel::F4, ExcitedLevel::F5], phi_max)
    }

    pub fn single_line(phi_max: f64) -> Self {
        Self::with_levels(&[ExcitedLevel::F5], phi_max)
    }

    pub fn with_levels(levels: &[ExcitedLevel], phi_max: f64) -> Self {
        Self {
            lines: levels.iter().map(|&l| TransitionLine::cs_d2(l)).collect(),
            gamma: NATURAL_LINEWIDTH_MHZ,
            phi_max,
            global_offset: 0.0,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.global_offset = offset;
        self
    }

    pub fn with_phi_max(mut self, phi_max: f64) -> Self {
        self.phi_max = phi_max;
        self
    }

    pub fn validate(&self) -> Result<(), MediumError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(MediumError::InvalidSystem("linewidth must be positive".into()));
        }
        if !(self.phi_max >= 0.0) {
            return Err(MediumError::InvalidSystem("phi_max must be non-negative".into()));
        }
        if self.lines.is_empty() {
            return Err(MediumError::InvalidSystem("no transition lines".into()));
        }
        if self.lines.windows(2).any(|w| w[0].frequency_offset >= w[1].frequency_offset) {
            return Err(MediumError::InvalidSystem("lines must be strictly ordered in frequency".into()));
        }
        Ok(())
    }

    /// Peak optical density of the F' = 5 line, `4 phi_max`.
    pub fn od_max(&self) -> f64 {
        4.0 * self.phi_max
    }

    /// Normalized detuning of `probe_frequency` from `line`.
    pub fn normalized_detuning(&self, line: &TransitionLine, probe_frequency: f64) -> f64 {
        2.0 * (probe_frequency - line.frequency_offset - self.global_offset) / self.gamma
    }

    /// Dispersive shape per unit `phi_max`: `-sum 2 r Delta / (Delta^2 + 1)`.
    pub fn phase_shape(&self, probe_frequency: f64) -> f64 {
        self.lines
            .iter()
            .map(|l| {
                let d = self.normalized_detuning(l, probe_frequency);
                -2.0 * l.strength_ratio * d / (d * d + 1.0)
            })
            .sum()
    }

    /// Absorptive shape per unit `OD_max`: `sum r / (Delta^2 + 1)`.
    pub fn absorption_shape(&self, probe_frequency: f64) -> f64 {
        self.lines
            .iter()
            .map(|l| {
                let d = self.normalized_detuning(l, probe_frequency);
                l.strength_ratio / (d * d + 1.0)
            })
            .sum()
    }

    /// Derivatives of the phase with respect to `phi_max` and `global_offset`.
    pub fn phase_gradient(&self, probe_frequency: f64) -> (f64, f64) {
        let d_offset: f64 = self
            .lines
            .iter()
            .map(|l| {
                let d = self.normalized_detuning(l, probe_frequency);
                let den = d * d + 1.0;
                // d/dDelta [Delta/(Delta^2+1)] = (1 - Delta^2)/(Delta^2+1)^2, dDelta/doffset = -2/gamma
                -2.0 * l.strength_ratio * (1.0 - d * d) / (den * den) * (-2.0 / self.gamma)
            })
            .sum();
        (self.phase_shape(probe_frequency), self.phi_max * d_offset)
    }

    /// Derivatives of the optical density with respect to `phi_max` and `global_offset`.
    pub fn od_gradient(&self, probe_frequency: f64) -> (f64, f64) {
        let d_offset: f64 = self
            .lines
            .iter()
            .map(|l| {
                let d = self.normalized_detuning(l, probe_frequency);
                let den = d * d + 1.0;
                l.strength_ratio * (-2.0 * d) / (den * den) * (-2.0 / self.gamma)
            })
            .sum();
        (4.0 * self.absorption_shape(probe_frequency), self.od_max() * d_offset)
    }
}

/// Per-mode amplitude transmissions and phases at one detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalResponse {
    pub t_par: f64,
    pub t_perp: f64,
    pub phi_par: f64,
    pub phi_perp: f64,
}

impl OpticalResponse {
    pub const IDENTITY: Self = Self {
        t_par: 1.0,
        t_perp: 1.0,
        phi_par: 0.0,
        phi_perp: 0.0,
    };

    pub fn phase_difference(&self) -> f64 {
        self.phi_par - self.phi_perp
    }
}

/// Phase shift (rad) of the probe at `probe_frequency` (MHz from the F' = 5 line).
pub fn dispersive_phase(system: &LineSystem, probe_frequency: f64) -> f64 {
    system.phi_max * system.phase_shape(probe_frequency)
}

/// Optical density at `probe_frequency`.
pub fn optical_density(system: &LineSystem, probe_frequency: f64) -> f64 {
    system.od_max() * system.absorption_shape(probe_frequency)
}

/// Amplitude transmission `exp(-OD/2)`.
pub fn amplitude_transmission(od: f64) -> f64 {
    (-0.5 * od).exp()
}

/// Response of both eigenmodes, with `system.phi_max` referring to the
/// parallel mode and the perpendicular mode weaker by `asymmetry`.
pub fn response_at(system: &LineSystem, probe_frequency: f64, asymmetry: f64) -> OpticalResponse {
    let phi_par = dispersive_phase(system, probe_frequency);
    let od_par = optical_density(system, probe_frequency);
    OpticalResponse {
        t_par: amplitude_transmission(od_par),
        t_perp: amplitude_transmission(od_par / asymmetry),
        phi_par,
        phi_perp: phi_par / asymmetry,
    }
}

/// `phi_max = N eta / 4`.
pub fn atom_number_to_phi_max(atoms: f64, per_atom_od: f64) -> f64 {
    atoms * per_atom_od / 4.0
}

/// Zero crossing of the dispersive phase strictly inside `(lo, hi)` (MHz),
/// located by a sign scan and refined by bisection. Returns the first crossing.
pub fn zero_crossing(system: &LineSystem, lo: f64, hi: f64) -> Option<f64> {
    const STEPS: usize = 4000;
    let f = |nu: f64| system.phase_shape(nu);
    let step = (hi - lo) / STEPS as f64;
    let mut a = lo + 0.5 * step;
    let mut fa = f(a);
    for i in 1..STEPS {
        let b = lo + (i as f64 + 0.5) * step;
        let fb = f(b);
        if fa == 0.0 {
            return Some(a);
        }
        if fa.signum() != fb.signum() {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (x0 + x1);
                if mid <= x0 || mid >= x1 {
                    break;
                }
                let fm = f(mid);
                if fm.signum() == f0.signum() {
                    x0 = mid;
                    f0 = fm;
                } else {
                    x1 = mid;
                }
            }
            return Some(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    None
}

/// The far-wing crossing between the F' = 4 and F' = 5 lines.
pub fn crossing_between_f4_f5(system: &LineSystem) -> Option<f64> {
    let f4 = system.global_offset + OFFSET_F4_MHZ;
    let f5 = system.global_offset;
    zero_crossing(system, f4 + system.gamma, f5 - system.gamma)
}

/// Inputs of the per-atom photon scattering estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringInput {
    /// W
    pub probe_power: f64,
    /// MHz from the F' = 5 line
    pub detuning: f64,
    /// Effective mode area at the atoms (m^2).
    pub area: f64,
    pub asymmetry: f64,
    /// Far-detuned resonant cross-section sigma_5 (m^2).
    pub cross_section: f64,
    /// m
    pub wavelength: f64,
}

/// Low-saturation scattering rate per atom (Hz).
///
/// The balanced probe puts half its power in each eigenmode. The parallel
/// mode has intensity `P/2/A` at the atoms, the perpendicular mode `1/rho` of
/// that. The rate is `sum sigma_F' I/(hbar omega) / (Delta^2 + 1)`.
pub fn scattering_rate(system: &LineSystem, input: &ScatteringInput) -> Result<f64, MediumError> {
    if !(input.probe_power >= 0.0) {
        return Err(MediumError::InvalidArgument("probe power must be non-negative".into()));
    }
    if !(input.area > 0.0 && input.asymmetry > 0.0 && input.wavelength > 0.0) {
        return Err(MediumError::InvalidArgument(
            "area, asymmetry and wavelength must be positive".into(),
        ));
    }
    let intensity = 0.5 * input.probe_power / input.area * (1.0 + 1.0 / input.asymmetry);
    let photon_flux = intensity / photon_energy(input.wavelength);
    Ok(input.cross_section * photon_flux * system.absorption_shape(input.detuning))
}

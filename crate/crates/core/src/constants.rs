//! Physical constants and the default experimental parameters.
//!
//! Every default used by the simulation, the fits and the CLI is defined here.

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m).
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// Nanofiber radius (m), 500 nm diameter.
pub const FIBER_RADIUS: f64 = 250e-9;
/// Refractive index of fused silica at 852 nm.
pub const SILICA_INDEX: f64 = 1.4525;
pub const VACUUM_INDEX: f64 = 1.0;
/// Probe wavelength (m), Cs D2 line.
pub const PROBE_WAVELENGTH: f64 = 852e-9;
/// Distance of the trapped atoms from the fiber surface (m).
pub const ATOM_SURFACE_DISTANCE: f64 = 230e-9;

/// Natural linewidth Gamma / 2 pi of the Cs D2 line (MHz).
pub const NATURAL_LINEWIDTH_MHZ: f64 = 5.2;
/// Excited-state hyperfine positions relative to F' = 5 (MHz).
pub const OFFSET_F4_MHZ: f64 = -251.1;
pub const OFFSET_F3_MHZ: f64 = -452.4;
/// Far-detuned cross-section ratios sigma_F' / sigma_5.
pub const STRENGTH_F3: f64 = 7.0 / 44.0;
pub const STRENGTH_F4: f64 = 21.0 / 44.0;
pub const STRENGTH_F5: f64 = 1.0;

/// Intensity ratio of the two quasi-linear modes at the atoms.
pub const COUPLING_ASYMMETRY: f64 = 2.8;
/// Ensemble size from the saturation measurement.
pub const ATOM_NUMBER: f64 = 1021.0;
pub const ATOM_NUMBER_SIGMA: f64 = 64.0;
/// Fitted maximum phase of the parallel mode (rad) and its 1 sigma.
pub const PHI_MAX_PAR: f64 = 6.98;
pub const PHI_MAX_PAR_SIGMA: f64 = 0.02;
/// Quoted optical density per atom.
pub const OD_PER_ATOM: f64 = 0.027;
/// Fitted frequency offset of the F' = 5 line (MHz).
pub const FREQUENCY_OFFSET_MHZ: f64 = -4.6;
/// Measured far-detuned resonant cross-section sigma_5 (m^2), 0.94e-9 cm^2.
pub const MEASURED_CROSS_SECTION: f64 = 0.94e-13;

/// Probe power for the continuous measurement (W).
pub const PROBE_POWER: f64 = 5e-12;
/// Blue detuning of the continuous atom-number probe (MHz).
pub const DECAY_PROBE_DETUNING_MHZ: f64 = 165.0;
/// Smallest detuning without measurable probe heating (MHz).
pub const MIN_SAFE_DETUNING_MHZ: f64 = 70.0;
/// Frequency scan duration (s).
pub const SCAN_DURATION: f64 = 0.5e-3;
pub const SCAN_AVERAGES: u32 = 128;
pub const PULSED_AVERAGES: u32 = 16;
/// Trap lifetime (s).
pub const TRAP_LIFETIME: f64 = 48e-3;
pub const DECAY_DURATION: f64 = 100e-3;
/// Relative uncertainty of the saturation-based atom-number scale.
pub const PULSED_SCALE_UNCERTAINTY: f64 = 0.12;

/// APD quantum efficiency at 852 nm (assumed, not a measured value).
pub const QUANTUM_EFFICIENCY: f64 = 0.5;

/// Default scan grid: -250 MHz to +200 MHz in 1 MHz steps.
pub const SCAN_START_MHZ: f64 = -250.0;
pub const SCAN_STOP_MHZ: f64 = 200.0;
pub const SCAN_STEP_MHZ: f64 = 1.0;

/// Unit-prefactor validity bound on the parallel-mode power transmission.
pub const MIN_POWER_TRANSMISSION: f64 = 0.75;

/// Photon energy at `wavelength` (J).
pub fn photon_energy(wavelength: f64) -> f64 {
    2.0 * std::f64::consts::PI * HBAR * SPEED_OF_LIGHT / wavelength
}

/// Default symmetric frequency grid in MHz.
pub fn default_scan_grid() -> Vec<f64> {
    let n = ((SCAN_STOP_MHZ - SCAN_START_MHZ) / SCAN_STEP_MHZ).round() as usize;
    (0..=n)
        .map(|i| SCAN_START_MHZ + i as f64 * SCAN_STEP_MHZ)
        .collect()
}

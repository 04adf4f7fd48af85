//! Synthetic frequency scans and atom-number decay traces with photon shot
//! noise and additive detector noise.
//!
//! Each work item (scan point, trace sample, pulse) draws from its own
//! ChaCha stream derived from the seed, so results do not depend on the
//! order or thread in which items are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic_medium::{self, LineSystem, OpticalResponse};
use crate::constants::{
    default_scan_grid, photon_energy, COUPLING_ASYMMETRY, DECAY_DURATION, DECAY_PROBE_DETUNING_MHZ,
    FREQUENCY_OFFSET_MHZ, PHI_MAX_PAR, ATOM_NUMBER, PROBE_POWER, PROBE_WAVELENGTH,
    PULSED_AVERAGES, PULSED_SCALE_UNCERTAINTY, QUANTUM_EFFICIENCY, SCAN_AVERAGES, SCAN_DURATION,
    TRAP_LIFETIME,
};
use crate::inference;
use crate::polarimetry::{self, JonesState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid probe configuration: {0}")]
    InvalidProbe(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("invalid decay configuration: {0}")]
    InvalidDecay(String),
    #[error(transparent)]
    Medium(#[from] atomic_medium::MediumError),
}

const STREAM_SCAN: u64 = 0;
const STREAM_CONTINUOUS: u64 = 1 << 40;
const STREAM_PULSED: u64 = 2 << 40;
const STREAM_SCALE: u64 = 3 << 40;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson_or_mean(mean: f64, shot: bool, rng: &mut ChaCha8Rng) -> f64 {
    if !shot || mean <= 0.0 {
        return mean.max(0.0);
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng)
}

fn gaussian(sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

/// Atomic ensemble as seen by the probe: per-atom optical density, mode
/// asymmetry and the line template (its `phi_max` is ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleModel {
    /// Resonant optical density per atom of the parallel mode.
    pub eta: f64,
    pub asymmetry: f64,
    pub lines: LineSystem,
    /// Uncompensated birefringence added to the phase difference (rad).
    #[serde(default)]
    pub residual_phase: f64,
}

impl Default for EnsembleModel {
    fn default() -> Self {
        Self {
            eta: 4.0 * PHI_MAX_PAR / ATOM_NUMBER,
            asymmetry: COUPLING_ASYMMETRY,
            lines: LineSystem::cs_d2(0.0).with_offset(FREQUENCY_OFFSET_MHZ),
            residual_phase: 0.0,
        }
    }
}

impl EnsembleModel {
    pub fn line_system(&self, atoms: f64) -> LineSystem {
        self.lines.clone().with_phi_max(atomic_medium::atom_number_to_phi_max(atoms, self.eta))
    }

    pub fn response(&self, atoms: f64, detuning: f64) -> OpticalResponse {
        atomic_medium::response_at(&self.line_system(atoms), detuning, self.asymmetry)
    }

    /// Noiseless output state for the balanced input of `power`.
    pub fn output_state(&self, atoms: f64, detuning: f64, power: f64) -> JonesState {
        polarimetry::propagate_with_residual(
            &JonesState::balanced(power),
            &self.response(atoms, detuning),
            self.residual_phase,
        )
    }

    /// Noiseless `S3/S0`.
    pub fn s3(&self, atoms: f64, detuning: f64) -> f64 {
        let r = self.response(atoms, detuning);
        let mut r2 = r;
        r2.phi_par += self.residual_phase;
        polarimetry::s3_closed_form(&r2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// W
    pub power: f64,
    /// MHz relative to the F' = 5 line, strictly monotone.
    pub detuning_grid: Vec<f64>,
    /// Integration time per grid point and repetition (s).
    pub dwell_per_point: f64,
    /// m
    pub wavelength: f64,
    pub averages: u32,
    /// Detuning windows `[lo, hi]` (MHz) left out of the record.
    #[serde(default)]
    pub masked_windows: Vec<(f64, f64)>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let grid = default_scan_grid();
        Self {
            power: PROBE_POWER,
            dwell_per_point: SCAN_DURATION / grid.len() as f64,
            detuning_grid: grid,
            wavelength: PROBE_WAVELENGTH,
            averages: SCAN_AVERAGES,
            masked_windows: Vec::new(),
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidProbe(m.into()));
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return bad("power must be non-negative");
        }
        if !(self.dwell_per_point > 0.0) {
            return bad("dwell must be positive");
        }
        if !(self.wavelength > 0.0) {
            return bad("wavelength must be positive");
        }
        if self.averages == 0 {
            return bad("averages must be at least 1");
        }
        if self.detuning_grid.is_empty() {
            return bad("empty detuning grid");
        }
        let up = self.detuning_grid.windows(2).all(|w| w[1] > w[0]);
        let down = self.detuning_grid.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return bad("detuning grid must be strictly monotone");
        }
        Ok(())
    }

    fn is_masked(&self, detuning: f64) -> bool {
        self.masked_windows.iter().any(|&(lo, hi)| detuning >= lo && detuning <= hi)
    }

    /// Expected detected photons per repetition for a port power `p`.
    pub fn counts_per_repetition(&self, p: f64, noise: &NoiseModel) -> f64 {
        noise.quantum_efficiency * p * self.dwell_per_point / photon_energy(self.wavelength)
    }

    /// Detector noise expressed in photon counts per repetition.
    pub fn detector_noise_counts(&self, noise: &NoiseModel) -> f64 {
        noise.detector_noise_rms * self.dwell_per_point / photon_energy(self.wavelength)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub shot_noise: bool,
    /// Gaussian noise per APD and repetition (W).
    pub detector_noise_rms: f64,
    pub quantum_efficiency: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            shot_noise: true,
            detector_noise_rms: 0.0,
            quantum_efficiency: QUANTUM_EFFICIENCY,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            shot_noise: false,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_noiseless(&self) -> bool {
        !self.shot_noise && self.detector_noise_rms == 0.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.detector_noise_rms >= 0.0 && self.detector_noise_rms.is_finite()) {
            return Err(SimError::InvalidNoise("detector noise must be non-negative".into()));
        }
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(SimError::InvalidNoise("quantum efficiency must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One frequency point of a scan: repetition-averaged detected APD powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "detuning_mhz")]
    pub detuning: f64,
    #[serde(rename = "p_plus_w")]
    pub p_plus: f64,
    #[serde(rename = "p_minus_w")]
    pub p_minus: f64,
    #[serde(rename = "s3_norm")]
    pub s3_over_s0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanMetadata {
    pub n_atoms: f64,
    pub model: EnsembleModel,
    pub probe: ProbeConfig,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumScan {
    pub rows: Vec<ScanRow>,
    /// Absent for records loaded without their sidecar.
    pub metadata: Option<ScanMetadata>,
}

/// Normalized readout from two port powers; zero when no light is detected.
pub fn s3_from_powers(p_plus: f64, p_minus: f64) -> f64 {
    let total = p_plus + p_minus;
    if total > 0.0 {
        (p_plus - p_minus) / total
    } else {
        0.0
    }
}

/// Draws the repetition-averaged detected powers for ideal port powers
/// `(plus, minus)`. The sum of independent Poisson counts over repetitions
/// is Poisson with the summed mean, and the mean of Gaussian detector noise
/// has rms `sigma / sqrt(averages)`, so one draw per port suffices.
fn measure_ports(
    plus: f64,
    minus: f64,
    probe: &ProbeConfig,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let k = f64::from(probe.averages);
    let per_count = photon_energy(probe.wavelength) / (probe.dwell_per_point * k);
    let sigma = noise.detector_noise_rms / k.sqrt();
    let mut port = |p: f64| {
        let counts = poisson_or_mean(k * probe.counts_per_repetition(p, noise), noise.shot_noise, rng);
        (counts * per_count + gaussian(sigma, rng)).max(0.0)
    };
    let a = port(plus);
    let b = port(minus);
    (a, b)
}

/// Simulates a frequency scan of `n_atoms` atoms.
pub fn simulate_scan(
    n_atoms: f64,
    model: &EnsembleModel,
    probe: &ProbeConfig,
    noise: &NoiseModel,
) -> Result<SpectrumScan, SimError> {
    probe.validate()?;
    noise.validate()?;
    model.lines.validate()?;
    if !(n_atoms >= 0.0) {
        return Err(SimError::InvalidProbe("atom number must be non-negative".into()));
    }
    let rows: Vec<ScanRow> = probe
        .detuning_grid
        .par_iter()
        .enumerate()
        .filter(|(_, &nu)| !probe.is_masked(nu))
        .map(|(i, &nu)| {
            let (plus, minus) = model.output_state(n_atoms, nu, probe.power).circular_powers();
            let mut rng = stream_rng(noise.seed, STREAM_SCAN + i as u64);
            let (p_plus, p_minus) = measure_ports(plus, minus, probe, noise, &mut rng);
            ScanRow {
                detuning: nu,
                p_plus,
                p_minus,
                s3_over_s0: s3_from_powers(p_plus, p_minus),
            }
        })
        .collect();
    Ok(SpectrumScan {
        rows,
        metadata: Some(ScanMetadata {
            n_atoms,
            model: model.clone(),
            probe: probe.clone(),
            noise: *noise,
        }),
    })
}

/// First-order variance of the averaged `S3/S0` given the expected summed
/// counts of both ports over all repetitions (`total_counts`), the readout
/// value and the detector noise.
pub fn s3_variance_from_counts(total_counts: f64, s3: f64, averages: u32, detector_noise_counts: f64, shot_noise: bool) -> f64 {
    if total_counts <= 0.0 {
        return f64::INFINITY;
    }
    let k = f64::from(averages);
    let shot = if shot_noise { total_counts * (1.0 - s3 * s3) } else { 0.0 };
    let detector = 2.0 * k * detector_noise_counts.powi(2) * (1.0 + s3 * s3);
    (shot + detector) / (total_counts * total_counts)
}

/// Predicted variance of one scan point's `S3/S0` from the noiseless forward model.
pub fn predicted_s3_variance(n_atoms: f64, detuning: f64, model: &EnsembleModel, probe: &ProbeConfig, noise: &NoiseModel) -> f64 {
    let (plus, minus) = model.output_state(n_atoms, detuning, probe.power).circular_powers();
    let k = f64::from(probe.averages);
    let total = k * probe.counts_per_repetition(plus + minus, noise);
    s3_variance_from_counts(
        total,
        s3_from_powers(plus, minus),
        probe.averages,
        probe.detector_noise_counts(noise),
        noise.shot_noise,
    )
}

/// Variance of a measured scan row, using its own detected powers.
pub fn row_s3_variance(row: &ScanRow, probe: &ProbeConfig, noise: &NoiseModel) -> f64 {
    let k = f64::from(probe.averages);
    // detected powers already include the quantum efficiency
    let total = k * (row.p_plus + row.p_minus) * probe.dwell_per_point / photon_energy(probe.wavelength);
    s3_variance_from_counts(
        total,
        row.s3_over_s0.clamp(-1.0, 1.0),
        probe.averages,
        probe.detector_noise_counts(noise),
        noise.shot_noise,
    )
}

/// Resonant pulsed-absorption channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsedConfig {
    /// Number of pulses, evenly spaced over the trace.
    pub points: usize,
    /// Optical density per atom seen by the pulse.
    pub od_per_atom: f64,
    /// Incident photons per pulse.
    pub photons_per_pulse: f64,
    pub averages: u32,
    /// Relative 1 sigma of the absolute atom-number scale.
    pub scale_uncertainty: f64,
}

impl Default for PulsedConfig {
    fn default() -> Self {
        Self {
            points: 11,
            od_per_atom: 1e-3,
            photons_per_pulse: 40.0,
            averages: PULSED_AVERAGES,
            scale_uncertainty: PULSED_SCALE_UNCERTAINTY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub n0: f64,
    /// Trap lifetime (s).
    pub tau: f64,
    /// s
    pub duration: f64,
    /// Additional loss rate caused by the dispersive probe (1/s).
    #[serde(default)]
    pub extra_loss_rate: f64,
    pub pulsed: PulsedConfig,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            n0: 1000.0,
            tau: TRAP_LIFETIME,
            duration: DECAY_DURATION,
            extra_loss_rate: 0.0,
            pulsed: PulsedConfig::default(),
        }
    }
}

/// Probe settings of the continuous channel: fixed blue detuning, 1 ms samples.
pub fn default_decay_probe() -> ProbeConfig {
    ProbeConfig {
        power: PROBE_POWER,
        detuning_grid: vec![DECAY_PROBE_DETUNING_MHZ],
        dwell_per_point: 1e-3,
        wavelength: PROBE_WAVELENGTH,
        averages: SCAN_AVERAGES,
        masked_windows: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRow {
    pub t: f64,
    pub phase_difference: f64,
    pub inferred_atoms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsedRow {
    pub t_delay: f64,
    pub transmission: f64,
    pub inferred_atoms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayMetadata {
    pub config: DecayConfig,
    pub model: EnsembleModel,
    pub probe: ProbeConfig,
    pub noise: NoiseModel,
    /// Realized scale factor applied to the pulsed atom numbers.
    pub pulsed_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    pub continuous: Vec<ContinuousRow>,
    pub pulsed: Vec<PulsedRow>,
    pub metadata: DecayMetadata,
}

/// Simulates the continuous dispersive channel and the pulsed resonant
/// absorption channel of an exponentially decaying ensemble.
pub fn simulate_decay(
    config: &DecayConfig,
    model: &EnsembleModel,
    probe: &ProbeConfig,
    noise: &NoiseModel,
) -> Result<DecayTrace, SimError> {
    probe.validate()?;
    noise.validate()?;
    model.lines.validate()?;
    let bad = |m: &str| Err(SimError::InvalidDecay(m.into()));
    if !(config.tau > 0.0 && config.tau.is_finite()) {
        return bad("tau must be positive");
    }
    if !(config.duration > 0.0 && config.duration.is_finite()) {
        return bad("duration must be positive");
    }
    if !(config.n0 >= 0.0) {
        return bad("initial atom number must be non-negative");
    }
    if !(config.extra_loss_rate >= 0.0) {
        return bad("extra loss rate must be non-negative");
    }
    if probe.detuning_grid.len() != 1 {
        return bad("the continuous channel needs exactly one probe detuning");
    }
    let p = &config.pulsed;
    if p.points == 0 || !(p.od_per_atom > 0.0) || !(p.photons_per_pulse > 0.0) || p.averages == 0 {
        return bad("pulsed channel needs points, od_per_atom, photons and averages > 0");
    }
    let detuning = probe.detuning_grid[0];
    let samples = (config.duration / probe.dwell_per_point + 1e-9).floor() as usize + 1;
    let cont_rate = 1.0 / config.tau + config.extra_loss_rate;

    let continuous: Vec<ContinuousRow> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * probe.dwell_per_point;
            let atoms = config.n0 * (-t * cont_rate).exp();
            let (plus, minus) = model.output_state(atoms, detuning, probe.power).circular_powers();
            let mut rng = stream_rng(noise.seed, STREAM_CONTINUOUS + i as u64);
            let (a, b) = measure_ports(plus, minus, probe, noise, &mut rng);
            let s3 = s3_from_powers(a, b).clamp(-1.0, 1.0);
            ContinuousRow {
                t,
                phase_difference: s3.asin(),
                inferred_atoms: inference::atoms_from_s3(s3, detuning, model).unwrap_or(f64::NAN),
            }
        })
        .collect();

    let mut scale_rng = stream_rng(noise.seed, STREAM_SCALE);
    let pulsed_scale = if noise.is_noiseless() {
        1.0
    } else {
        1.0 + gaussian(p.scale_uncertainty, &mut scale_rng)
    };
    let k = f64::from(p.averages);
    let reference = k * noise.quantum_efficiency * p.photons_per_pulse;
    let pulsed: Vec<PulsedRow> = (0..p.points)
        .map(|j| {
            let t = if p.points > 1 {
                config.duration * j as f64 / (p.points - 1) as f64
            } else {
                0.0
            };
            let atoms = config.n0 * (-t / config.tau).exp();
            let transmission = (-p.od_per_atom * atoms).exp();
            let mut rng = stream_rng(noise.seed, STREAM_PULSED + j as u64);
            let counts = poisson_or_mean(reference * transmission, noise.shot_noise, &mut rng);
            // half a count keeps the logarithm finite for fully absorbed pulses
            let measured = counts.max(0.5) / reference;
            PulsedRow {
                t_delay: t,
                transmission: measured,
                inferred_atoms: -measured.ln() / p.od_per_atom * pulsed_scale,
            }
        })
        .collect();

    Ok(DecayTrace {
        continuous,
        pulsed,
        metadata: DecayMetadata {
            config: config.clone(),
            model: model.clone(),
            probe: probe.clone(),
            noise: *noise,
            pulsed_scale,
        },
    })
}

/// Shot-noise-limited atom-number sensitivity (atoms / sqrt(Hz)).
///
/// The readout noise floor is `1/sqrt(Phi)` per unit bandwidth for a photon
/// flux `Phi = P / (hbar omega)`, and one atom shifts the phase difference by
/// `slope / detuning`.
pub fn sensitivity_estimate(
    probe_power: f64,
    detuning: f64,
    dphi_slope_mrad_mhz: f64,
    wavelength: f64,
) -> Result<f64, SimError> {
    if !(probe_power > 0.0) {
        return Err(SimError::InvalidProbe("probe power must be positive".into()));
    }
    if detuning == 0.0 || !detuning.is_finite() {
        return Err(SimError::InvalidProbe("detuning must be non-zero".into()));
    }
    if !(dphi_slope_mrad_mhz > 0.0) {
        return Err(SimError::InvalidProbe("per-atom slope must be positive".into()));
    }
    let flux = probe_power / photon_energy(wavelength);
    let per_atom = dphi_slope_mrad_mhz * 1e-3 / detuning.abs();
    Ok(1.0 / flux.sqrt() / per_atom)
}

/// Smallest detectable atom number for an integration time (s).
pub fn minimum_detectable_atoms(sensitivity: f64, integration_time: f64) -> f64 {
    sensitivity / integration_time.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_probe() -> ProbeConfig {
        ProbeConfig {
            detuning_grid: vec![-60.0, -30.0, 40.0, 80.0],
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn noiseless_scan_equals_forward_model() {
        let model = EnsembleModel::default();
        let probe = ProbeConfig::default();
        let scan = simulate_scan(1021.0, &model, &probe, &NoiseModel::noiseless()).unwrap();
        assert_eq!(scan.rows.len(), probe.detuning_grid.len());
        for row in &scan.rows {
            let r = model.response(1021.0, row.detuning);
            let expected = polarimetry::s3_closed_form(&r);
            assert!((row.s3_over_s0 - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let model = EnsembleModel::default();
        let noise = NoiseModel {
            detector_noise_rms: 1e-13,
            ..NoiseModel::default()
        }
        .with_seed(42);
        let a = simulate_scan(1021.0, &model, &ProbeConfig::default(), &noise).unwrap();
        let b = simulate_scan(1021.0, &model, &ProbeConfig::default(), &noise).unwrap();
        assert_eq!(a, b);
        let c = simulate_scan(1021.0, &model, &ProbeConfig::default(), &noise.with_seed(43)).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn masked_windows_drop_points() {
        let probe = ProbeConfig {
            masked_windows: vec![(-20.0, 20.0)],
            ..ProbeConfig::default()
        };
        let scan = simulate_scan(1021.0, &EnsembleModel::default(), &probe, &NoiseModel::noiseless()).unwrap();
        assert_eq!(scan.rows.len(), probe.detuning_grid.len() - 41);
        assert!(scan.rows.iter().all(|r| r.detuning.abs() > 20.0));
    }

    #[test]
    fn empty_atoms_read_zero() {
        let noise = NoiseModel {
            shot_noise: false,
            detector_noise_rms: 1e-14,
            ..NoiseModel::default()
        };
        let scan = simulate_scan(0.0, &EnsembleModel::default(), &small_probe(), &noise).unwrap();
        for r in &scan.rows {
            assert!(r.s3_over_s0.abs() < 0.01);
        }
    }

    #[test]
    fn validation_errors() {
        let model = EnsembleModel::default();
        let noise = NoiseModel::default();
        let empty = ProbeConfig {
            detuning_grid: vec![],
            ..ProbeConfig::default()
        };
        assert!(matches!(simulate_scan(1.0, &model, &empty, &noise), Err(SimError::InvalidProbe(_))));
        let shuffled = ProbeConfig {
            detuning_grid: vec![0.0, 2.0, 1.0],
            ..ProbeConfig::default()
        };
        assert!(simulate_scan(1.0, &model, &shuffled, &noise).is_err());
        let bad_qe = NoiseModel {
            quantum_efficiency: 0.0,
            ..noise
        };
        assert!(matches!(
            simulate_scan(1.0, &model, &ProbeConfig::default(), &bad_qe),
            Err(SimError::InvalidNoise(_))
        ));
        let bad = DecayConfig {
            tau: 0.0,
            ..DecayConfig::default()
        };
        assert!(simulate_decay(&bad, &model, &default_decay_probe(), &noise).is_err());
        let bad = DecayConfig {
            duration: -1.0,
            ..DecayConfig::default()
        };
        assert!(simulate_decay(&bad, &model, &default_decay_probe(), &noise).is_err());
    }

    #[test]
    fn noiseless_decay_is_exactly_exponential() {
        let cfg = DecayConfig::default();
        let trace = simulate_decay(&cfg, &EnsembleModel::default(), &default_decay_probe(), &NoiseModel::noiseless()).unwrap();
        assert_eq!(trace.continuous.len(), 101);
        for row in &trace.continuous {
            let expected = cfg.n0.ln() - row.t / cfg.tau;
            assert!((row.inferred_atoms.ln() - expected).abs() < 1e-9, "t={} {}", row.t, row.inferred_atoms);
        }
        for row in &trace.pulsed {
            let expected = cfg.n0 * (-row.t_delay / cfg.tau).exp();
            assert!((row.inferred_atoms - expected).abs() < 1e-9 * cfg.n0);
        }
    }

    #[test]
    fn sensitivity_values() {
        let s = sensitivity_estimate(5e-12, 70.0, 23.0, 852e-9).unwrap();
        // photon flux 2.1445e7 /s: 2.1594e-4 / (0.023/70) = 0.6572
        assert!((s - 0.6572).abs() < 1e-3, "{s}");
        let s4 = sensitivity_estimate(20e-12, 70.0, 23.0, 852e-9).unwrap();
        assert!((s / s4 - 2.0).abs() < 1e-12);
        assert!(sensitivity_estimate(5e-12, 0.0, 23.0, 852e-9).is_err());
        assert!(sensitivity_estimate(0.0, 70.0, 23.0, 852e-9).is_err());
        let n = minimum_detectable_atoms(s, 5e-3);
        assert!((8.0..=20.0).contains(&n));
    }
}

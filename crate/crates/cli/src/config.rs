//! Run configuration: JSON file, overridden by flags, echoed as a sidecar.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use nanofiber_core::atomic_medium::LineSystem;
use nanofiber_core::constants as c;
use nanofiber_core::fiber_modes::{AtomGeometry, FiberGeometry};
use nanofiber_core::inference::{SpectrumFitOptions, Weighting};
use nanofiber_core::measurement_sim::{DecayConfig, EnsembleModel, NoiseModel, ProbeConfig, PulsedConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Which lines enter a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Lines {
    /// F' = 3, 4 and 5
    All,
    /// F' = 4 and 5
    Nearest,
}

impl Lines {
    pub fn system(self) -> LineSystem {
        match self {
            Lines::All => LineSystem::cs_d2(0.0),
            Lines::Nearest => LineSystem::cs_d2_nearest(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberSection {
    /// m
    pub radius: f64,
    pub core_index: f64,
    pub cladding_index: f64,
    /// m
    pub wavelength: f64,
    /// m
    pub surface_distance: f64,
    /// Half width of the intensity map (m).
    pub map_half_width: f64,
    pub map_points: usize,
}

impl Default for FiberSection {
    fn default() -> Self {
        Self {
            radius: c::FIBER_RADIUS,
            core_index: c::SILICA_INDEX,
            cladding_index: c::VACUUM_INDEX,
            wavelength: c::PROBE_WAVELENGTH,
            surface_distance: c::ATOM_SURFACE_DISTANCE,
            map_half_width: 1e-6,
            map_points: 101,
        }
    }
}

impl FiberSection {
    pub fn geometry(&self) -> Result<FiberGeometry> {
        Ok(FiberGeometry::new(self.radius, self.core_index, self.cladding_index, self.wavelength)?)
    }

    pub fn atom(&self) -> AtomGeometry {
        AtomGeometry {
            surface_distance: self.surface_distance,
            ..AtomGeometry::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub atoms: f64,
    /// Resonant OD per atom; when absent, `4 phi_max / N` from the calibration scan.
    pub eta: Option<f64>,
    pub asymmetry: f64,
    /// MHz
    pub offset: f64,
    pub lines: Lines,
    /// rad
    pub residual_phase: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            atoms: c::ATOM_NUMBER,
            eta: None,
            asymmetry: c::COUPLING_ASYMMETRY,
            offset: c::FREQUENCY_OFFSET_MHZ,
            lines: Lines::All,
            residual_phase: 0.0,
        }
    }
}

impl EnsembleSection {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(4.0 * c::PHI_MAX_PAR / c::ATOM_NUMBER)
    }

    pub fn model(&self) -> EnsembleModel {
        EnsembleModel {
            eta: self.eta(),
            asymmetry: self.asymmetry,
            lines: self.lines.system().with_offset(self.offset),
            residual_phase: self.residual_phase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    /// W
    pub power: f64,
    pub averages: u32,
    /// MHz
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Total scan duration per repetition (s), split evenly over the grid.
    pub scan_duration: f64,
    pub masked_windows: Vec<(f64, f64)>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            power: c::PROBE_POWER,
            averages: c::SCAN_AVERAGES,
            start: c::SCAN_START_MHZ,
            stop: c::SCAN_STOP_MHZ,
            step: c::SCAN_STEP_MHZ,
            scan_duration: c::SCAN_DURATION,
            masked_windows: Vec::new(),
        }
    }
}

impl ProbeSection {
    pub fn probe(&self) -> Result<ProbeConfig> {
        anyhow::ensure!(self.step > 0.0 && self.stop >= self.start, "need step > 0 and stop >= start");
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        let grid: Vec<f64> = (0..n).map(|i| self.start + i as f64 * self.step).collect();
        Ok(ProbeConfig {
            power: self.power,
            dwell_per_point: self.scan_duration / n as f64,
            detuning_grid: grid,
            wavelength: c::PROBE_WAVELENGTH,
            averages: self.averages,
            masked_windows: self.masked_windows.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub shot_noise: bool,
    /// W
    pub detector_noise_rms: f64,
    pub quantum_efficiency: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseModel::default();
        Self {
            shot_noise: n.shot_noise,
            detector_noise_rms: n.detector_noise_rms,
            quantum_efficiency: n.quantum_efficiency,
        }
    }
}

impl NoiseSection {
    pub fn model(&self, seed: u64) -> NoiseModel {
        NoiseModel {
            shot_noise: self.shot_noise,
            detector_noise_rms: self.detector_noise_rms,
            quantum_efficiency: self.quantum_efficiency,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub template: Lines,
    pub od_threshold: Option<f64>,
    pub mask_windows: Vec<(f64, f64)>,
    pub weighting: Weighting,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = SpectrumFitOptions::default();
        Self {
            template: Lines::Nearest,
            od_threshold: o.od_threshold,
            mask_windows: o.mask_windows,
            weighting: o.weighting,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> SpectrumFitOptions {
        SpectrumFitOptions {
            mask_windows: self.mask_windows.clone(),
            od_threshold: self.od_threshold,
            weighting: self.weighting,
            ..SpectrumFitOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    pub n0: f64,
    /// s
    pub tau: f64,
    /// s
    pub duration: f64,
    /// 1/s
    pub extra_loss_rate: f64,
    /// MHz
    pub detuning: f64,
    /// s
    pub sample_interval: f64,
    pub averages: u32,
    pub pulsed: PulsedConfig,
}

impl Default for DecaySection {
    fn default() -> Self {
        let d = DecayConfig::default();
        Self {
            n0: d.n0,
            tau: d.tau,
            duration: d.duration,
            extra_loss_rate: d.extra_loss_rate,
            detuning: c::DECAY_PROBE_DETUNING_MHZ,
            sample_interval: 1e-3,
            averages: c::SCAN_AVERAGES,
            pulsed: d.pulsed,
        }
    }
}

impl DecaySection {
    pub fn config(&self) -> DecayConfig {
        DecayConfig {
            n0: self.n0,
            tau: self.tau,
            duration: self.duration,
            extra_loss_rate: self.extra_loss_rate,
            pulsed: self.pulsed,
        }
    }

    pub fn probe(&self, power: f64) -> ProbeConfig {
        ProbeConfig {
            power,
            detuning_grid: vec![self.detuning],
            dwell_per_point: self.sample_interval,
            wavelength: c::PROBE_WAVELENGTH,
            averages: self.averages,
            masked_windows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    /// W
    pub power: f64,
    /// MHz
    pub detuning: f64,
    /// mrad MHz / atom; derived from the ensemble calibration when absent.
    pub slope: Option<f64>,
    /// s
    pub integration_time: f64,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            power: c::PROBE_POWER,
            detuning: c::MIN_SAFE_DETUNING_MHZ,
            slope: None,
            integration_time: 5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
    pub fiber: FiberSection,
    pub ensemble: EnsembleSection,
    pub probe: ProbeSection,
    pub noise: NoiseSection,
    pub fit: FitSection,
    pub decay: DecaySection,
    pub sensitivity: SensitivitySection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

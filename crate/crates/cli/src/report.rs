//! Consistency table of the headline numbers.

use anyhow::Result;
use serde::Serialize;

use nanofiber_core::atomic_medium::{self, LineSystem, ScatteringInput};
use nanofiber_core::constants as c;
use nanofiber_core::fiber_modes;
use nanofiber_core::inference::Calibration;
use nanofiber_core::measurement_sim;
use nanofiber_core::polarimetry;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub name: &'static str,
    pub value: f64,
    pub unit: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rows: Vec<Row>,
    pub all_pass: bool,
}

fn row(name: &'static str, value: f64, unit: &'static str, lo: f64, hi: f64) -> Row {
    Row {
        name,
        value,
        unit,
        lo,
        hi,
        pass: value >= lo && value <= hi,
    }
}

pub fn build(cfg: &RunConfig) -> Result<Report> {
    let geometry = cfg.fiber.geometry()?;
    let mode = fiber_modes::solve_he11(&geometry)?;
    let atom = cfg.fiber.atom();
    let rho_mode = fiber_modes::coupling_asymmetry(&mode, &atom)?;
    let area = fiber_modes::effective_area(&mode, &atom)?;

    let od = 4.0 * c::PHI_MAX_PAR;
    let eta = cfg.ensemble.eta.unwrap_or(od / c::ATOM_NUMBER);
    let rho = cfg.ensemble.asymmetry;
    let cal = Calibration::from_eta(eta, rho, c::NATURAL_LINEWIDTH_MHZ);
    let crossing = atomic_medium::crossing_between_f4_f5(&LineSystem::cs_d2(c::PHI_MAX_PAR)).unwrap_or(f64::NAN);
    let prefactor = polarimetry::prefactor_error(c::MIN_POWER_TRANSMISSION.sqrt(), rho)?;
    let s = &cfg.sensitivity;
    let slope = s.slope.unwrap_or(cal.per_atom_dphi_slope);
    let sensitivity = measurement_sim::sensitivity_estimate(s.power, s.detuning, slope, c::PROBE_WAVELENGTH)?;
    let min_atoms = measurement_sim::minimum_detectable_atoms(sensitivity, s.integration_time);
    let rate = atomic_medium::scattering_rate(
        &LineSystem::cs_d2(0.0),
        &ScatteringInput {
            probe_power: cfg.probe.power,
            detuning: c::DECAY_PROBE_DETUNING_MHZ,
            area,
            asymmetry: rho_mode,
            cross_section: c::MEASURED_CROSS_SECTION,
            wavelength: c::PROBE_WAVELENGTH,
        },
    )?;

    let rows = vec![
        row("mode asymmetry rho", rho_mode, "", 2.65, 2.95),
        row("OD_par = 4 phi_max", od, "", 27.86, 28.00),
        row("eta = OD / N", eta, "1/atom", 0.025, 0.029),
        row("phi_par slope", cal.per_atom_phi_par_slope, "mrad MHz/atom", 34.0, 38.0),
        row("dphi slope", cal.per_atom_dphi_slope, "mrad MHz/atom", 22.0, 24.0),
        row("F'4-F'5 zero crossing", crossing, "MHz", -187.0, -157.0),
        row("prefactor error at T = 0.75", prefactor, "", 0.0, 0.01),
        row("shot-noise sensitivity", sensitivity, "atoms/sqrt(Hz)", 0.5, 0.9),
        row("atoms detectable in 5 ms", min_atoms, "atoms", 8.0, 20.0),
        row("scattering rate at +165 MHz", rate, "Hz/atom", 12.5, 200.0),
    ];
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(Report { rows, all_pass })
}

pub fn render(report: &Report) -> String {
    let mut out = String::new();
    out += &format!("{:<30} {:>12} {:<15} {:>21}  {}\n", "quantity", "value", "unit", "band", "status");
    for r in &report.rows {
        out += &format!(
            "{:<30} {:>12.5} {:<15} [{:>9.4}, {:>9.4}]  {}\n",
            r.name,
            r.value,
            r.unit,
            r.lo,
            r.hi,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    out += if report.all_pass { "all checks PASS\n" } else { "some checks FAIL\n" };
    out
}

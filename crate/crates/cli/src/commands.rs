//! Subcommand bodies. Each writes its records plus `<command>.run.json`, the
//! merged configuration that reproduces the run via `--config`.

use std::fs::{self, File};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use nanofiber_core::atomic_medium;
use nanofiber_core::constants as c;
use nanofiber_core::fiber_modes;
use nanofiber_core::inference::{self, Calibration, DecayChannel, FitResult, LsqOptions};
use nanofiber_core::io;
use nanofiber_core::measurement_sim::{self, DecayTrace, SpectrumScan};

use crate::config::{Format, RunConfig};
use crate::report;

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_run(dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    io::write_json_file(&dir.join(format!("{command}.run.json")), cfg)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    io::write_json_file(path, value).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct ScanJson<'a> {
    rows: &'a [measurement_sim::ScanRow],
    metadata: &'a Option<measurement_sim::ScanMetadata>,
}

fn save_scan(dir: &Path, stem: &str, scan: &SpectrumScan, format: Format) -> Result<PathBuf> {
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            io::save_scan(&path, scan)?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, &ScanJson {
                rows: &scan.rows,
                metadata: &scan.metadata,
            })?;
            Ok(path)
        }
    }
}

fn save_trace(dir: &Path, stem: &str, trace: &DecayTrace, format: Format) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct TraceJson<'a> {
        continuous: &'a [measurement_sim::ContinuousRow],
        pulsed: &'a [measurement_sim::PulsedRow],
        metadata: &'a measurement_sim::DecayMetadata,
    }
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            io::save_trace(&path, trace)?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, &TraceJson {
                continuous: &trace.continuous,
                pulsed: &trace.pulsed,
                metadata: &trace.metadata,
            })?;
            Ok(path)
        }
    }
}

fn save_rows<T: Serialize>(dir: &Path, stem: &str, rows: &[T], format: Format) -> Result<()> {
    match format {
        Format::Csv => io::write_rows_csv(rows, File::create(dir.join(format!("{stem}.csv")))?)?,
        Format::Json => write_json(&dir.join(format!("{stem}.json")), &rows)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct ModeSummary {
    radius_m: f64,
    wavelength_m: f64,
    core_index: f64,
    cladding_index: f64,
    v_number: f64,
    effective_index: f64,
    beta_per_m: f64,
    dispersion_residual: f64,
    atom_radius_m: f64,
    rho: f64,
    far_field_rho: f64,
    effective_area_um2: f64,
    i0_per_um2: f64,
    i2_per_um2: f64,
}

pub fn modes(cfg: &RunConfig) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let geometry = cfg.fiber.geometry()?;
    let mode = fiber_modes::solve_he11(&geometry).context("mode solver failed")?;
    let atom = cfg.fiber.atom();
    let r = atom.radial_position(&geometry);
    let profile = mode.azimuthal_profile(r)?;
    let summary = ModeSummary {
        radius_m: geometry.radius,
        wavelength_m: geometry.wavelength,
        core_index: geometry.core_index,
        cladding_index: geometry.cladding_index,
        v_number: geometry.v_number(),
        effective_index: mode.effective_index,
        beta_per_m: mode.beta,
        dispersion_residual: fiber_modes::dispersion_residual(&geometry, mode.effective_index),
        atom_radius_m: r,
        rho: fiber_modes::coupling_asymmetry(&mode, &atom)?,
        far_field_rho: mode.far_field_asymmetry(),
        effective_area_um2: fiber_modes::effective_area(&mode, &atom)? * 1e12,
        i0_per_um2: profile.i0 * 1e-12,
        i2_per_um2: profile.i2 * 1e-12,
    };
    write_json(&dir.join("modes.json"), &summary)?;
    for (axis, name) in [(0.0, "x"), (std::f64::consts::FRAC_PI_2, "y")] {
        let map = fiber_modes::intensity_map(&mode, cfg.fiber.map_half_width, cfg.fiber.map_points, axis);
        save_rows(&dir, &format!("modes_map_{name}"), &map, cfg.format)?;
    }
    write_run(&dir, "modes", cfg)?;
    println!(
        "n_eff = {:.8}, rho = {:.4}, A_eff = {:.3} um^2",
        summary.effective_index, summary.rho, summary.effective_area_um2
    );
    Ok(true)
}

fn simulate_scan(cfg: &RunConfig) -> Result<SpectrumScan> {
    let probe = cfg.probe.probe()?;
    Ok(measurement_sim::simulate_scan(
        cfg.ensemble.atoms,
        &cfg.ensemble.model(),
        &probe,
        &cfg.noise.model(cfg.seed),
    )?)
}

pub fn scan(cfg: &RunConfig) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let scan = simulate_scan(cfg)?;
    let path = save_scan(&dir, "scan", &scan, cfg.format)?;
    write_run(&dir, "scan", cfg)?;
    println!("{} points written to {}", scan.rows.len(), path.display());
    Ok(true)
}

#[derive(Serialize)]
struct ModelPoint {
    detuning_mhz: f64,
    phi_par_rad: f64,
    s3_norm: f64,
}

fn print_fit(label: &str, fit: &FitResult) {
    let parts: Vec<String> = fit
        .parameters
        .iter()
        .map(|(k, v)| format!("{k} = {v:.6} +/- {:.6}", fit.uncertainties[k]))
        .collect();
    println!("{label}: {} (residual rms {:.3e}, {} iterations)", parts.join(", "), fit.residual_rms, fit.iterations);
}

pub fn figure3(cfg: &RunConfig) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let scan = simulate_scan(cfg)?;
    save_scan(&dir, "figure3_scan", &scan, cfg.format)?;
    write_run(&dir, "figure3", cfg)?;
    let template = cfg.fit.template.system();
    let fit = inference::fit_spectrum(&scan, &template, &cfg.fit.options()).context("calibration fit failed")?;
    write_json(&dir.join("figure3_fit.json"), &fit)?;

    let p = [fit.parameters["phi_max"], fit.parameters["offset"]];
    let sys = template.clone().with_phi_max(p[0]).with_offset(p[1]);
    let n = ((cfg.probe.stop - cfg.probe.start) / 0.25).floor() as usize + 1;
    let curve: Vec<ModelPoint> = (0..n)
        .map(|i| {
            let nu = cfg.probe.start + 0.25 * i as f64;
            ModelPoint {
                detuning_mhz: nu,
                phi_par_rad: atomic_medium::dispersive_phase(&sys, nu),
                s3_norm: inference::spectrum_s3_model(&template, &p, cfg.ensemble.asymmetry, nu),
            }
        })
        .collect();
    save_rows(&dir, "figure3_model", &curve, cfg.format)?;
    print_fit("figure3 fit", &fit);
    Ok(true)
}

fn simulate_decay(cfg: &RunConfig) -> Result<DecayTrace> {
    Ok(measurement_sim::simulate_decay(
        &cfg.decay.config(),
        &cfg.ensemble.model(),
        &cfg.decay.probe(cfg.probe.power),
        &cfg.noise.model(cfg.seed),
    )?)
}

pub fn decay(cfg: &RunConfig) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let trace = simulate_decay(cfg)?;
    let path = save_trace(&dir, "decay", &trace, cfg.format)?;
    write_run(&dir, "decay", cfg)?;
    println!(
        "{} continuous and {} pulsed samples written to {}",
        trace.continuous.len(),
        trace.pulsed.len(),
        path.display()
    );
    Ok(true)
}

#[derive(Serialize)]
struct DecaySummary {
    tau_continuous_s: f64,
    sigma_continuous_s: f64,
    tau_pulsed_s: f64,
    sigma_pulsed_s: f64,
    difference_s: f64,
    difference_sigma_s: f64,
    consistent_at_3_sigma: bool,
}

fn fit_both(trace: &DecayTrace) -> Result<(FitResult, FitResult)> {
    let opts = LsqOptions::default();
    let cont = inference::fit_decay(trace, DecayChannel::Continuous, &opts).context("continuous-channel fit failed")?;
    let pulsed = inference::fit_decay(trace, DecayChannel::Pulsed, &opts).context("pulsed-channel fit failed")?;
    Ok((cont, pulsed))
}

pub fn figure4(cfg: &RunConfig) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let trace = simulate_decay(cfg)?;
    save_trace(&dir, "figure4_trace", &trace, cfg.format)?;
    write_run(&dir, "figure4", cfg)?;
    let (cont, pulsed) = fit_both(&trace)?;
    write_json(&dir.join("figure4_fit_continuous.json"), &cont)?;
    write_json(&dir.join("figure4_fit_pulsed.json"), &pulsed)?;
    let (tc, sc) = cont.get("tau").expect("tau is fitted");
    let (tp, sp) = pulsed.get("tau").expect("tau is fitted");
    let ds = sc.hypot(sp);
    let summary = DecaySummary {
        tau_continuous_s: tc,
        sigma_continuous_s: sc,
        tau_pulsed_s: tp,
        sigma_pulsed_s: sp,
        difference_s: tc - tp,
        difference_sigma_s: ds,
        consistent_at_3_sigma: (tc - tp).abs() <= 3.0 * ds,
    };
    write_json(&dir.join("figure4_summary.json"), &summary)?;
    print_fit("continuous", &cont);
    print_fit("pulsed", &pulsed);
    Ok(true)
}

pub fn fit(cfg: &RunConfig, input: &Path) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .context("input has no file name")?
        .to_string();
    let mut first = String::new();
    std::io::BufReader::new(File::open(input).with_context(|| format!("opening {}", input.display()))?)
        .read_line(&mut first)?;
    let header = first.trim_end();
    if header == io::SCAN_HEADER.join(",") {
        let scan = io::load_scan(input)?;
        let fit = inference::fit_spectrum(&scan, &cfg.fit.template.system(), &cfg.fit.options()).context("scan fit failed")?;
        write_json(&dir.join(format!("{stem}.fit.json")), &fit)?;
        print_fit("scan fit", &fit);
    } else if header == io::TRACE_HEADER.join(",") {
        let trace = io::load_trace(input)?;
        let (cont, pulsed) = fit_both(&trace)?;
        write_json(&dir.join(format!("{stem}.fit_continuous.json")), &cont)?;
        write_json(&dir.join(format!("{stem}.fit_pulsed.json")), &pulsed)?;
        print_fit("continuous", &cont);
        print_fit("pulsed", &pulsed);
    } else {
        bail!("{} is neither a scan nor a trace record (header {header:?})", input.display());
    }
    write_run(&dir, "fit", cfg)?;
    Ok(true)
}

#[derive(Serialize)]
struct SensitivityOut {
    power_w: f64,
    detuning_mhz: f64,
    dphi_slope_mrad_mhz: f64,
    atoms_per_sqrt_hz: f64,
    integration_time_s: f64,
    min_detectable_atoms: f64,
}

pub fn sensitivity(cfg: &RunConfig) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let s = &cfg.sensitivity;
    let slope = s.slope.unwrap_or_else(|| {
        Calibration::from_eta(cfg.ensemble.eta(), cfg.ensemble.asymmetry, c::NATURAL_LINEWIDTH_MHZ).per_atom_dphi_slope
    });
    let value = measurement_sim::sensitivity_estimate(s.power, s.detuning, slope, c::PROBE_WAVELENGTH)?;
    let out = SensitivityOut {
        power_w: s.power,
        detuning_mhz: s.detuning,
        dphi_slope_mrad_mhz: slope,
        atoms_per_sqrt_hz: value,
        integration_time_s: s.integration_time,
        min_detectable_atoms: measurement_sim::minimum_detectable_atoms(value, s.integration_time),
    };
    write_json(&dir.join("sensitivity.json"), &out)?;
    write_run(&dir, "sensitivity", cfg)?;
    println!(
        "{:.3} atoms/sqrt(Hz); {:.1} atoms detectable in {} s",
        out.atoms_per_sqrt_hz, out.min_detectable_atoms, out.integration_time_s
    );
    Ok(true)
}

pub fn report(cfg: &RunConfig, json: bool) -> Result<bool> {
    let dir = output_dir(cfg)?;
    let rep = report::build(cfg)?;
    write_json(&dir.join("report.json"), &rep)?;
    write_run(&dir, "report", cfg)?;
    if json {
        print!("{}", io::to_json(&rep)?);
    } else {
        print!("{}", report::render(&rep));
    }
    Ok(rep.all_pass)
}

//! Fit of the dispersive line model to a frequency scan.
//!
//! Residuals are formed on `S3/S0` itself through the exact readout
//! `sech(x) sin(dphi)` and weighted by the propagated count noise. This is
//! the parallel-phase residual of the small-phase readout expressed without
//! an arcsin, so points past |dphi| = pi/2 carry no branch ambiguity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lsq::{least_squares_solve, LsqOptions};
use super::{FitError, FitResult};
use crate::atomic_medium::{self, LineSystem};
use crate::constants::{COUPLING_ASYMMETRY, MIN_POWER_TRANSMISSION};
use crate::measurement_sim::{s3_variance_from_counts, ScanRow, SpectrumScan};
use crate::polarimetry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Inverse-variance weights when the scan carries noise metadata.
    #[default]
    Auto,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumFitOptions {
    /// Detuning windows `[lo, hi]` (MHz) always excluded.
    pub mask_windows: Vec<(f64, f64)>,
    /// Exclude points whose modeled parallel OD exceeds this value.
    pub od_threshold: Option<f64>,
    /// Mode asymmetry; taken from the scan metadata when absent.
    pub asymmetry: Option<f64>,
    /// `[phi_max, offset]`; derived from the data when absent.
    pub initial: Option<[f64; 2]>,
    pub weighting: Weighting,
    pub lsq: LsqOptions,
}

impl Default for SpectrumFitOptions {
    fn default() -> Self {
        Self {
            mask_windows: Vec::new(),
            od_threshold: Some(-MIN_POWER_TRANSMISSION.ln()),
            asymmetry: None,
            initial: None,
            weighting: Weighting::Auto,
            lsq: LsqOptions::default(),
        }
    }
}

fn system(template: &LineSystem, p: &[f64]) -> LineSystem {
    template.clone().with_phi_max(p[0]).with_offset(p[1])
}

/// Noiseless `S3/S0` of the template with parameters `[phi_max, offset]`.
pub fn spectrum_s3_model(template: &LineSystem, p: &[f64], asymmetry: f64, detuning: f64) -> f64 {
    polarimetry::s3_closed_form(&atomic_medium::response_at(&system(template, p), detuning, asymmetry))
}

/// Analytic derivatives of [`spectrum_s3_model`] with respect to `[phi_max, offset]`.
pub fn spectrum_jacobian(template: &LineSystem, p: &[f64], asymmetry: f64, detuning: f64) -> [f64; 2] {
    let sys = system(template, p);
    let c = 1.0 - 1.0 / asymmetry;
    let dphi = c * atomic_medium::dispersive_phase(&sys, detuning);
    let x = -0.5 * c * atomic_medium::optical_density(&sys, detuning);
    let (gp0, gp1) = sys.phase_gradient(detuning);
    let (go0, go1) = sys.od_gradient(detuning);
    let sech = 1.0 / x.cosh();
    let d = |gp: f64, go: f64| sech * (dphi.cos() * c * gp - x.tanh() * dphi.sin() * (-0.5 * c * go));
    [d(gp0, go0), d(gp1, go1)]
}

struct Weights {
    averages: u32,
    detector_noise_counts: f64,
    shot_noise: bool,
    /// Summed detected counts per row over all repetitions.
    totals: Vec<f64>,
}

fn in_windows(windows: &[(f64, f64)], nu: f64) -> bool {
    windows.iter().any(|&(lo, hi)| nu >= lo && nu <= hi)
}

/// Median of the sign changes of the data between the two highest-frequency
/// template lines, minus the template's own crossing there.
fn offset_guess(template: &LineSystem, rows: &[&ScanRow]) -> f64 {
    let n = template.lines.len();
    if n < 2 {
        return template.global_offset;
    }
    let lo_line = template.lines[n - 2].frequency_offset + template.global_offset;
    let hi_line = template.lines[n - 1].frequency_offset + template.global_offset;
    let gap = hi_line - lo_line;
    let (a, b) = (lo_line + 0.2 * gap, hi_line - 0.2 * gap);
    let Some(model_crossing) = atomic_medium::zero_crossing(template, lo_line + template.gamma, hi_line - template.gamma) else {
        return template.global_offset;
    };
    let inside: Vec<&&ScanRow> = rows.iter().filter(|r| r.detuning >= a && r.detuning <= b).collect();
    let mut crossings: Vec<f64> = inside
        .windows(2)
        .filter(|w| w[0].s3_over_s0.signum() != w[1].s3_over_s0.signum())
        .map(|w| {
            let (x0, y0, x1, y1) = (w[0].detuning, w[0].s3_over_s0, w[1].detuning, w[1].s3_over_s0);
            x0 - y0 * (x1 - x0) / (y1 - y0)
        })
        .collect();
    if crossings.is_empty() {
        return template.global_offset;
    }
    crossings.sort_by(f64::total_cmp);
    crossings[crossings.len() / 2] - model_crossing + template.global_offset
}

/// Scale search for `phi_max` at fixed offset on points well away from all
/// lines, where the readout stays single-valued over a wide range.
fn phi_max_guess(template: &LineSystem, rows: &[&ScanRow], offset: f64, asymmetry: f64) -> Result<f64, FitError> {
    let far: Vec<&&ScanRow> = rows
        .iter()
        .filter(|r| {
            template
                .lines
                .iter()
                .all(|l| (r.detuning - l.frequency_offset - offset).abs() > 30.0)
        })
        .collect();
    let pts: Vec<&ScanRow> = if far.len() >= 10 { far.into_iter().copied().collect() } else { rows.to_vec() };
    let cost = |phi: f64| -> f64 {
        pts.iter()
            .map(|r| (r.s3_over_s0 - spectrum_s3_model(template, &[phi, offset], asymmetry, r.detuning)).powi(2))
            .sum()
    };
    const N: usize = 241;
    let grid: Vec<f64> = (0..N).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (N - 1) as f64)).collect();
    let costs: Vec<f64> = grid.iter().map(|&g| cost(g)).collect();
    let best = (0..N).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).expect("non-empty grid");
    if best == 0 {
        return Err(FitError::Degenerate("no dispersive signal in the scan".into()));
    }
    // golden-section refinement inside the neighboring grid cells (log scale)
    let (mut a, mut b) = (grid[best - 1].ln(), grid[(best + 1).min(N - 1)].ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..60 {
        if cost(c.exp()) < cost(d.exp()) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    Ok((0.5 * (a + b)).exp())
}

fn windows_from_mask(rows: &[&ScanRow], keep: &[bool]) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for (r, &k) in rows.iter().zip(keep) {
        if !k {
            start.get_or_insert(r.detuning);
            last = r.detuning;
        } else if let Some(s) = start.take() {
            out.push([s.min(last), s.max(last)]);
        }
    }
    if let Some(s) = start {
        out.push([s.min(last), s.max(last)]);
    }
    out
}

/// Fits `[phi_max, offset]` of `template` to `scan`.
pub fn fit_spectrum(scan: &SpectrumScan, template: &LineSystem, options: &SpectrumFitOptions) -> Result<FitResult, FitError> {
    template
        .validate()
        .map_err(|e| FitError::InvalidData(e.to_string()))?;
    let asymmetry = options
        .asymmetry
        .or(scan.metadata.as_ref().map(|m| m.model.asymmetry))
        .unwrap_or(COUPLING_ASYMMETRY);
    if !(asymmetry > 1.0 && asymmetry.is_finite()) {
        return Err(FitError::InvalidData(format!("asymmetry {asymmetry} must exceed 1")));
    }
    let rows: Vec<&ScanRow> = scan
        .rows
        .iter()
        .filter(|r| r.s3_over_s0.is_finite() && r.s3_over_s0.abs() <= 1.0 && !in_windows(&options.mask_windows, r.detuning))
        .collect();
    if rows.len() < 10 {
        return Err(FitError::InsufficientData(format!("{} unmasked points, need at least 10", rows.len())));
    }

    let weights = match (options.weighting, &scan.metadata) {
        (Weighting::Auto, Some(meta)) if !meta.noise.is_noiseless() => {
            let probe = &meta.probe;
            let k = f64::from(probe.averages);
            let per_watt = k * probe.dwell_per_point / crate::constants::photon_energy(probe.wavelength);
            Some(Weights {
                averages: probe.averages,
                detector_noise_counts: probe.detector_noise_counts(&meta.noise),
                shot_noise: meta.noise.shot_noise,
                totals: rows.iter().map(|r| (r.p_plus + r.p_minus) * per_watt).collect(),
            })
        }
        _ => None,
    };

    let mut params = match options.initial {
        Some(p) => p.to_vec(),
        None => {
            let offset = offset_guess(template, &rows);
            vec![phi_max_guess(template, &rows, offset, asymmetry)?, offset]
        }
    };

    let mut prev_keep: Option<Vec<bool>> = None;
    let mut result = None;
    for _ in 0..10 {
        let sys = system(template, &params);
        let keep: Vec<bool> = rows
            .iter()
            .map(|r| options.od_threshold.is_none_or(|th| atomic_medium::optical_density(&sys, r.detuning) <= th))
            .collect();
        let used: Vec<usize> = (0..rows.len()).filter(|&i| keep[i]).collect();
        if used.len() < 10 {
            return Err(FitError::InsufficientData(format!("{} points left after masking", used.len())));
        }
        let sigma: Vec<f64> = match &weights {
            None => vec![1.0; used.len()],
            Some(w) => used
                .iter()
                .map(|&i| {
                    let model = spectrum_s3_model(template, &params, asymmetry, rows[i].detuning);
                    let total = w.totals[i].max(1.0);
                    let var = s3_variance_from_counts(total, model, w.averages, w.detector_noise_counts, w.shot_noise);
                    var.max(1.0 / (total * total)).sqrt()
                })
                .collect(),
        };
        let residual = |p: &[f64]| -> Vec<f64> {
            used.iter()
                .zip(&sigma)
                .map(|(&i, s)| (rows[i].s3_over_s0 - spectrum_s3_model(template, p, asymmetry, rows[i].detuning)) / s)
                .collect()
        };
        let jacobian = |p: &[f64]| -> DMatrix<f64> {
            DMatrix::from_fn(used.len(), 2, |k, c| {
                -spectrum_jacobian(template, p, asymmetry, rows[used[k]].detuning)[c] / sigma[k]
            })
        };
        let sol = least_squares_solve(residual, jacobian, &params, &options.lsq)?;
        if !sol.converged {
            return Err(FitError::NotConverged {
                iterations: sol.iterations,
                best: sol.parameters,
            });
        }
        let sig = sol.uncertainties(weights.is_none())?;
        let change_small = sol
            .parameters
            .iter()
            .zip(&params)
            .zip(&sig)
            .all(|((a, b), s)| (a - b).abs() <= (1e-3 * s).max(1e-12 * a.abs()));
        let stable = prev_keep.as_ref() == Some(&keep) && change_small;
        params = sol.parameters.clone();
        result = Some((sol, sig, keep.clone(), used));
        prev_keep = Some(keep);
        if stable {
            break;
        }
    }
    let (sol, sig, keep, used) = result.expect("at least one pass");

    if !(params[0] > 0.0) || params[0] < 3.0 * sig[0] {
        return Err(FitError::Degenerate(format!(
            "phi_max = {} +/- {} is not significant",
            params[0], sig[0]
        )));
    }

    let factor = 1.0 / (1.0 - 1.0 / asymmetry);
    let phase = |s: f64| factor * s.clamp(-1.0, 1.0).asin();
    let residual_rms = (used
        .iter()
        .map(|&i| {
            let m = spectrum_s3_model(template, &params, asymmetry, rows[i].detuning);
            (phase(rows[i].s3_over_s0) - phase(m)).powi(2)
        })
        .sum::<f64>()
        / used.len() as f64)
        .sqrt();
    let principal: Vec<f64> = used.iter().map(|&i| rows[i].s3_over_s0.clamp(-1.0, 1.0).asin()).collect();
    let unwrap_flagged = polarimetry::unwrap_arcsin(&principal).flagged;

    let mut mask_used: Vec<[f64; 2]> = options.mask_windows.iter().map(|&(a, b)| [a, b]).collect();
    mask_used.extend(windows_from_mask(&rows, &keep));

    Ok(FitResult {
        parameters: [("phi_max".to_string(), params[0]), ("offset".to_string(), params[1])].into(),
        uncertainties: [("phi_max".to_string(), sig[0]), ("offset".to_string(), sig[1])].into(),
        residual_rms,
        converged: sol.converged,
        iterations: sol.iterations,
        mask_used,
        points_used: used.len(),
        unwrap_flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::numeric_jacobian;
    use crate::measurement_sim::{simulate_scan, EnsembleModel, NoiseModel, ProbeConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let template = LineSystem::cs_d2_nearest(0.0);
        for _ in 0..20 {
            let p = [rng.random_range(1.0..12.0), rng.random_range(-10.0..10.0)];
            let nu = rng.random_range(-240.0..190.0);
            // the phase model itself
            let f = |q: &[f64]| vec![atomic_medium::dispersive_phase(&system(&template, q), nu)];
            let fd = numeric_jacobian(&f, &p, 1e-6);
            let (a0, a1) = system(&template, &p).phase_gradient(nu);
            for (a, n) in [(a0, fd[(0, 0)]), (a1, fd[(0, 1)])] {
                assert!((a - n).abs() <= 1e-5 * a.abs().max(1e-8), "{a} {n}");
            }
            let g = |q: &[f64]| vec![spectrum_s3_model(&template, q, 2.8, nu)];
            let fd = numeric_jacobian(&g, &p, 1e-6);
            let an = spectrum_jacobian(&template, &p, 2.8, nu);
            for c in 0..2 {
                assert!((an[c] - fd[(0, c)]).abs() <= 1e-5 * an[c].abs().max(1e-6), "{} {}", an[c], fd[(0, c)]);
            }
        }
    }

    #[test]
    fn noiseless_recovery() {
        let model = EnsembleModel {
            lines: LineSystem::cs_d2_nearest(0.0).with_offset(-4.6),
            ..EnsembleModel::default()
        };
        let scan = simulate_scan(1021.0, &model, &ProbeConfig::default(), &NoiseModel::noiseless()).unwrap();
        let fit = fit_spectrum(&scan, &LineSystem::cs_d2_nearest(0.0), &SpectrumFitOptions::default()).unwrap();
        let (phi, _) = fit.get("phi_max").unwrap();
        let (off, _) = fit.get("offset").unwrap();
        let truth = model.eta * 1021.0 / 4.0;
        assert!((phi / truth - 1.0).abs() < 1e-6, "{phi}");
        assert!((off + 4.6).abs() < 1e-6 * 4.6, "{off}");
        assert!(fit.residual_rms < 1e-9);
        assert!(!fit.mask_used.is_empty());
    }

    #[test]
    fn amplitude_scaling_does_not_move_fit() {
        let model = EnsembleModel {
            lines: LineSystem::cs_d2_nearest(0.0).with_offset(-4.6),
            ..EnsembleModel::default()
        };
        let scan = simulate_scan(1021.0, &model, &ProbeConfig::default(), &NoiseModel::default().with_seed(5)).unwrap();
        let mut scaled = scan.clone();
        for r in &mut scaled.rows {
            r.p_plus *= 3.7;
            r.p_minus *= 3.7;
        }
        let t = LineSystem::cs_d2_nearest(0.0);
        let a = fit_spectrum(&scan, &t, &SpectrumFitOptions::default()).unwrap();
        let b = fit_spectrum(&scaled, &t, &SpectrumFitOptions::default()).unwrap();
        for k in ["phi_max", "offset"] {
            let (x, _) = a.get(k).unwrap();
            let (y, _) = b.get(k).unwrap();
            assert!((x - y).abs() < 1e-7 * x.abs().max(1.0), "{k}: {x} {y}");
        }
    }

    #[test]
    fn empty_scan_is_degenerate() {
        let scan = simulate_scan(0.0, &EnsembleModel::default(), &ProbeConfig::default(), &NoiseModel::default().with_seed(1)).unwrap();
        let err = fit_spectrum(&scan, &LineSystem::cs_d2_nearest(0.0), &SpectrumFitOptions::default()).unwrap_err();
        assert!(matches!(err, FitError::Degenerate(_) | FitError::RankDeficient), "{err:?}");
    }

    #[test]
    fn too_few_points() {
        let probe = ProbeConfig {
            detuning_grid: (0..8).map(|i| 60.0 + i as f64).collect(),
            ..ProbeConfig::default()
        };
        let scan = simulate_scan(1021.0, &EnsembleModel::default(), &probe, &NoiseModel::noiseless()).unwrap();
        assert!(matches!(
            fit_spectrum(&scan, &LineSystem::cs_d2_nearest(0.0), &SpectrumFitOptions::default()),
            Err(FitError::InsufficientData(_))
        ));
    }
}

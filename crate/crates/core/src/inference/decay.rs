//! Exponential decay fits of atom-number traces.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lsq::{least_squares_solve, LsqOptions};
use super::{FitError, FitResult};
use crate::measurement_sim::DecayTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayChannel {
    Continuous,
    Pulsed,
}

/// Fits `N0 exp(-t / tau)` to one channel of a trace with uniform weights.
pub fn fit_decay(trace: &DecayTrace, channel: DecayChannel, options: &LsqOptions) -> Result<FitResult, FitError> {
    let (t, y): (Vec<f64>, Vec<f64>) = match channel {
        DecayChannel::Continuous => trace.continuous.iter().map(|r| (r.t, r.inferred_atoms)).unzip(),
        DecayChannel::Pulsed => trace.pulsed.iter().map(|r| (r.t_delay, r.inferred_atoms)).unzip(),
    };
    fit_exponential(&t, &y, None, options)
}

/// Fits `N0 exp(-t / tau)`. With `sigma` the residuals are normalized and the
/// covariance is absolute; without, it is scaled by the reduced chi-square.
pub fn fit_exponential(t: &[f64], y: &[f64], sigma: Option<&[f64]>, options: &LsqOptions) -> Result<FitResult, FitError> {
    if t.len() != y.len() || sigma.is_some_and(|s| s.len() != t.len()) {
        return Err(FitError::InvalidData("column lengths differ".into()));
    }
    let idx: Vec<usize> = (0..t.len())
        .filter(|&i| t[i].is_finite() && y[i].is_finite() && sigma.is_none_or(|s| s[i] > 0.0 && s[i].is_finite()))
        .collect();
    if idx.len() < 5 {
        return Err(FitError::InsufficientData(format!("{} points, need at least 5", idx.len())));
    }
    let positive: Vec<usize> = idx.iter().copied().filter(|&i| y[i] > 0.0).collect();
    if positive.len() < 2 {
        return Err(FitError::InvalidData("atom numbers are all zero or negative".into()));
    }

    // log-linear initial guess on the positive points
    let n = positive.len() as f64;
    let (sx, sy) = positive
        .iter()
        .fold((0.0, 0.0), |(a, b), &i| (a + t[i], b + y[i].ln()));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = positive.iter().fold((0.0, 0.0), |(a, b), &i| {
        let dx = t[i] - mx;
        (a + dx * dx, b + dx * (y[i].ln() - my))
    });
    let span = idx.iter().map(|&i| t[i]).fold(f64::NEG_INFINITY, f64::max)
        - idx.iter().map(|&i| t[i]).fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return Err(FitError::InsufficientData("all samples at the same time".into()));
    }
    let slope = sxy / sxx;
    let tau0 = if slope < 0.0 { -1.0 / slope } else { 10.0 * span };
    let n00 = (my - slope * mx).exp();

    let w: Vec<f64> = idx.iter().map(|&i| sigma.map_or(1.0, |s| s[i])).collect();
    let residual = |p: &[f64]| -> Vec<f64> {
        idx.iter()
            .zip(&w)
            .map(|(&i, s)| (p[0] * (-t[i] / p[1]).exp() - y[i]) / s)
            .collect()
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), 2, |k, c| {
            let ti = t[idx[k]];
            let e = (-ti / p[1]).exp();
            let v = if c == 0 { e } else { p[0] * e * ti / (p[1] * p[1]) };
            v / w[k]
        })
    };
    let sol = least_squares_solve(residual, jacobian, &[n00, tau0], options)?;
    if !sol.converged {
        return Err(FitError::NotConverged {
            iterations: sol.iterations,
            best: sol.parameters,
        });
    }
    let (n0, tau) = (sol.parameters[0], sol.parameters[1]);
    if !(tau > 0.0) {
        return Err(FitError::Degenerate(format!("fitted tau = {tau} is not a decay")));
    }
    if span < tau {
        return Err(FitError::InsufficientData(format!(
            "samples span {span} s, less than one time constant ({tau} s)"
        )));
    }
    let sig = sol.uncertainties(sigma.is_none())?;
    let residual_rms = (idx
        .iter()
        .map(|&i| (n0 * (-t[i] / tau).exp() - y[i]).powi(2))
        .sum::<f64>()
        / idx.len() as f64)
        .sqrt();
    Ok(FitResult {
        parameters: [("N0".to_string(), n0), ("tau".to_string(), tau)].into(),
        uncertainties: [("N0".to_string(), sig[0]), ("tau".to_string(), sig[1])].into(),
        residual_rms,
        converged: true,
        iterations: sol.iterations,
        mask_used: Vec::new(),
        points_used: idx.len(),
        unwrap_flagged: false,
    })
}

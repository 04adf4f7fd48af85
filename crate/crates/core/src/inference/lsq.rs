//! Damped Gauss-Newton (Levenberg-Marquardt) least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// On the scaled gradient `max_j |J_j . r| / (|J_j| |r|)`.
    pub gradient_tolerance: f64,
    /// On `|step| / (|x| + step_tolerance)`.
    pub step_tolerance: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub parameters: Vec<f64>,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// `0.5 |r|^2`
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl LsqSolution {
    /// `(J^T J)^-1`, multiplied by the reduced chi-square when
    /// `scale_by_residuals` (residuals not normalized by known sigmas).
    pub fn covariance(&self, scale_by_residuals: bool) -> Result<DMatrix<f64>, FitError> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        check_rank(&jtj)?;
        let inv = jtj.try_inverse().ok_or(FitError::RankDeficient)?;
        if scale_by_residuals {
            let dof = self.residuals.len().saturating_sub(self.parameters.len()).max(1);
            Ok(inv * (2.0 * self.cost / dof as f64))
        } else {
            Ok(inv)
        }
    }

    pub fn uncertainties(&self, scale_by_residuals: bool) -> Result<Vec<f64>, FitError> {
        let cov = self.covariance(scale_by_residuals)?;
        Ok((0..cov.nrows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect())
    }
}

fn check_rank(jtj: &DMatrix<f64>) -> Result<(), FitError> {
    // Normalize columns first so that parameter units do not matter.
    let d: Vec<f64> = (0..jtj.nrows()).map(|i| jtj[(i, i)].sqrt()).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(FitError::RankDeficient);
    }
    let scaled = DMatrix::from_fn(jtj.nrows(), jtj.ncols(), |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > 1e-13 * max) {
        return Err(FitError::RankDeficient);
    }
    Ok(())
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn scaled_gradient(j: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = j.transpose() * r;
    (0..j.ncols())
        .map(|c| {
            let cn = j.column(c).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[c].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

/// Central finite-difference Jacobian with relative step `rel_step`.
pub fn numeric_jacobian<R>(residual: &R, x: &[f64], rel_step: f64) -> DMatrix<f64>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let m = residual(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for c in 0..x.len() {
        let h = rel_step * x[c].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let (rp, rm) = (residual(&xp), residual(&xm));
        for i in 0..m {
            jac[(i, c)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes `0.5 |residual(x)|^2` from `initial`.
///
/// Each iteration first tries the undamped Gauss-Newton step and falls back
/// to Marquardt damping `J^T J + lambda diag(J^T J)` when the cost would
/// rise, so linear problems finish in one step. Only cost-reducing steps are
/// accepted. Returns with `converged = false` after `max_iterations`.
pub fn least_squares_solve<R, J>(residual: R, jacobian: J, initial: &[f64], options: &LsqOptions) -> Result<LsqSolution, FitError>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    let mut x = initial.to_vec();
    let mut r = residual(&x);
    if !finite(&r) || !finite(&x) {
        return Err(FitError::NonFinite { parameters: x });
    }
    if r.len() < x.len() {
        return Err(FitError::InsufficientData(format!("{} residuals for {} parameters", r.len(), x.len())));
    }
    let mut cost = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let mut jac = jacobian(&x);
    if !finite(jac.as_slice()) {
        return Err(FitError::NonFinite { parameters: x });
    }
    check_rank(&(jac.transpose() * &jac))?;
    let mut lambda = 0.0_f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = scaled_gradient(&jac, &DVector::from_column_slice(&r));

    'outer: while iterations < options.max_iterations {
        if grad < options.gradient_tolerance {
            converged = true;
            break;
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;
        loop {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda = (lambda * 10.0).max(1e-3);
                    if lambda > 1e30 {
                        return Err(FitError::RankDeficient);
                    }
                    continue;
                }
            };
            let xn = DVector::from_column_slice(&x).norm();
            if step.norm() <= options.step_tolerance * (xn + options.step_tolerance) {
                converged = true;
                break 'outer;
            }
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residual(&trial);
            if !finite(&rt) {
                return Err(FitError::NonFinite { parameters: trial });
            }
            let ct = 0.5 * rt.iter().map(|v| v * v).sum::<f64>();
            if ct <= cost {
                x = trial;
                r = rt;
                cost = ct;
                lambda = if lambda < 1e-9 { 0.0 } else { lambda / 10.0 };
                break;
            }
            lambda = (lambda * 10.0).max(1e-3);
            if lambda > 1e30 {
                // no descent possible along any damped direction: stationary
                converged = true;
                break 'outer;
            }
        }
        iterations += 1;
        jac = jacobian(&x);
        if !finite(jac.as_slice()) {
            return Err(FitError::NonFinite { parameters: x });
        }
        grad = scaled_gradient(&jac, &DVector::from_column_slice(&r));
    }
    if !converged && grad < options.gradient_tolerance {
        converged = true;
    }
    Ok(LsqSolution {
        parameters: x,
        residuals: r,
        jacobian: jac,
        cost,
        iterations,
        converged,
        gradient_norm: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_problem_in_one_or_two_iterations() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x + (x * 1.7).sin() * 0.1).collect();
        let res = |p: &[f64]| xs.iter().zip(&ys).map(|(x, y)| p[0] + p[1] * x - y).collect::<Vec<_>>();
        let jac = |_: &[f64]| DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let sol = least_squares_solve(res, jac, &[0.0, 0.0], &LsqOptions::default()).unwrap();
        assert!(sol.converged && sol.iterations <= 2, "{}", sol.iterations);
        // normal equations solved independently
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let a = (sy - b * sx) / n;
        assert!((sol.parameters[0] - a).abs() < 1e-12 && (sol.parameters[1] - b).abs() < 1e-12);
    }

    #[test]
    fn rosenbrock_valley() {
        let res = |p: &[f64]| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]];
        let jac = |p: &[f64]| DMatrix::from_row_slice(2, 2, &[-20.0 * p[0], 10.0, -1.0, 0.0]);
        let sol = least_squares_solve(res, jac, &[-1.2, 1.0], &LsqOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.parameters[0] - 1.0).abs() < 1e-9 && (sol.parameters[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cost_never_increases() {
        use std::cell::RefCell;
        let costs = RefCell::new(Vec::new());
        let res = |p: &[f64]| {
            let r: Vec<f64> = (0..20)
                .map(|i| {
                    let t = i as f64 * 0.1;
                    p[0] * (-p[1] * t).exp() - 2.0 * (-1.3 * t).exp()
                })
                .collect();
            r
        };
        let jac = |p: &[f64]| numeric_jacobian(&res, p, 1e-7);
        let sol = least_squares_solve(
            |p: &[f64]| {
                let r = res(p);
                costs.borrow_mut().push(0.5 * r.iter().map(|v| v * v).sum::<f64>());
                r
            },
            jac,
            &[0.5, 5.0],
            &LsqOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert!((sol.parameters[0] - 2.0).abs() < 1e-8 && (sol.parameters[1] - 1.3).abs() < 1e-8);
        assert!(sol.cost <= costs.borrow()[0]);
    }

    #[test]
    fn non_finite_aborts_with_snapshot() {
        let res = |p: &[f64]| vec![p[0].ln(), p[0] - 2.0];
        let jac = |p: &[f64]| DMatrix::from_row_slice(2, 1, &[1.0 / p[0], 1.0]);
        match least_squares_solve(res, jac, &[-1.0], &LsqOptions::default()) {
            Err(FitError::NonFinite { parameters }) => assert_eq!(parameters, vec![-1.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let res = |p: &[f64]| vec![p[0] + p[1] - 1.0, 2.0 * (p[0] + p[1]) - 2.5];
        let jac = |_: &[f64]| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            least_squares_solve(res, jac, &[0.0, 0.0], &LsqOptions::default()),
            Err(FitError::RankDeficient)
        ));
    }

    #[test]
    fn max_iterations_reported() {
        let res = |p: &[f64]| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]];
        let jac = |p: &[f64]| DMatrix::from_row_slice(2, 2, &[-20.0 * p[0], 10.0, -1.0, 0.0]);
        let opts = LsqOptions {
            max_iterations: 1,
            ..LsqOptions::default()
        };
        let sol = least_squares_solve(res, jac, &[-1.2, 1.0], &opts).unwrap();
        assert!(!sol.converged && sol.iterations == 1);
    }

    #[test]
    fn covariance_of_straight_line_fit() {
        // sigma = 1 residuals: cov(a, b) for y = a + b x over x = 0..4
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let res = |p: &[f64]| xs.iter().map(|x| p[0] + p[1] * x).collect::<Vec<_>>();
        let jac = |_: &[f64]| DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let sol = least_squares_solve(res, jac, &[1.0, 1.0], &LsqOptions::default()).unwrap();
        let cov = sol.covariance(false).unwrap();
        // (X^T X)^-1 with sum x = 10, sum x^2 = 30, n = 5: det 50
        assert!((cov[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((cov[(1, 1)] - 0.1).abs() < 1e-12);
        assert!((cov[(0, 1)] + 0.2).abs() < 1e-12);
    }
}

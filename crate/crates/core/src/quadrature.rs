//! Composite Gauss-Legendre quadrature with panel doubling.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed composite rule: `panels` equal panels with the given rule.
pub fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        total += rule
            .0
            .iter()
            .zip(&rule.1)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half;
    }
    total
}

/// Doubles the panel count until two successive estimates agree within
/// `rel_tol` (or 2^14 panels are reached).
pub fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let rule = gauss_legendre(16);
    let mut panels = 1;
    let mut prev = composite(f, a, b, panels, &rule);
    loop {
        panels *= 2;
        let next = composite(f, a, b, panels, &rule);
        let change = (next - prev).abs() / next.abs().max(f64::MIN_POSITIVE);
        if change < rel_tol || panels >= 1 << 14 {
            return next;
        }
        prev = next;
    }
}

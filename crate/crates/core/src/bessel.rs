//! Bessel functions of integer order used by the HE11 mode solver.
//!
//! `J0..J2` use the ascending power series for small arguments and Miller's
//! backward recurrence (normalized with `J0 + 2 sum J_2k = 1`) above that.
//! `K0..K2` use the logarithmic series for `x <= 2` and Steed's continued
//! fraction above, which yields the exponentially scaled values `e^x K_n(x)`
//! directly. Evanescent-field ratios are built from the scaled variants so
//! that they stay finite far from the fiber.

use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT_J: f64 = 8.0;
const SERIES_LIMIT_K: f64 = 2.0;

/// Bessel function of the first kind `J_n(x)` for `n >= 0`, `x >= 0`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    assert!(x >= 0.0, "bessel_j is only defined here for x >= 0");
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x <= SERIES_LIMIT_J {
        j_series(n, x)
    } else {
        j_miller(n, x)
    }
}

pub fn j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn j1(x: f64) -> f64 {
    bessel_j(1, x)
}

pub fn j2(x: f64) -> f64 {
    bessel_j(2, x)
}

/// `J1'(x) = J0(x) - J1(x)/x`.
pub fn j1_prime(x: f64) -> f64 {
    j0(x) - j1(x) / x
}

fn j_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = -half * half;
    // leading term (x/2)^n / n!
    let mut term = (1..=n).fold(1.0, |acc, k| acc * half / f64::from(k));
    let mut sum = term;
    for k in 1..200u32 {
        term *= q / (f64::from(k) * f64::from(k + n));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn j_miller(n: u32, x: f64) -> f64 {
    let top = x.max(f64::from(n));
    let mut start = (top + 20.0 + 8.0 * top.sqrt()) as u32;
    start += start % 2;
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut norm = 0.0;
    let mut wanted = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * f64::from(k) / x * j - jp1;
        jp1 = j;
        j = jm1;
        if k - 1 == n {
            wanted = j;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    norm += j;
    wanted / norm
}

/// Exponentially scaled modified Bessel functions `(e^x K0(x), e^x K1(x))`.
pub fn k01_scaled(x: f64) -> (f64, f64) {
    assert!(x > 0.0, "modified Bessel K requires x > 0");
    if x <= SERIES_LIMIT_K {
        let (k0, k1) = k01_series(x);
        let e = x.exp();
        (k0 * e, k1 * e)
    } else {
        k01_steed_scaled(x)
    }
}

/// Scaled `e^x K_n(x)` for `n = 0, 1, 2`.
pub fn k_scaled(n: u32, x: f64) -> f64 {
    let (k0, k1) = k01_scaled(x);
    match n {
        0 => k0,
        1 => k1,
        2 => k0 + 2.0 / x * k1,
        _ => {
            let (mut km, mut k) = (k0, k1);
            for m in 1..n {
                let kp = km + 2.0 * f64::from(m) / x * k;
                km = k;
                k = kp;
            }
            k
        }
    }
}

pub fn k0(x: f64) -> f64 {
    k_scaled(0, x) * (-x).exp()
}

pub fn k1(x: f64) -> f64 {
    k_scaled(1, x) * (-x).exp()
}

pub fn k2(x: f64) -> f64 {
    k_scaled(2, x) * (-x).exp()
}

/// `K1'(x) = -K0(x) - K1(x)/x`.
pub fn k1_prime(x: f64) -> f64 {
    -k0(x) - k1(x) / x
}

fn k01_series(x: f64) -> (f64, f64) {
    let y = 0.25 * x * x;
    let log_half = (0.5 * x).ln();

    // K0 = -ln(x/2) I0 + sum psi(k+1) y^k/(k!)^2
    // K1 = 1/x + ln(x/2) I1 - (x/4) sum (psi(k+1)+psi(k+2)) y^k/(k!(k+1)!)
    let mut i0 = 0.0;
    let mut i1 = 0.0;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut t0 = 1.0; // y^k/(k!)^2
    let mut t1 = 1.0; // y^k/(k!(k+1)!)
    let mut psi = -EULER_GAMMA; // psi(k+1)
    for k in 0..100u32 {
        let kf = f64::from(k);
        let psi_next = psi + 1.0 / (kf + 1.0);
        i0 += t0;
        i1 += t1;
        s0 += psi * t0;
        s1 += (psi + psi_next) * t1;
        if t0 < 1e-18 * i0 {
            break;
        }
        t0 *= y / ((kf + 1.0) * (kf + 1.0));
        t1 *= y / ((kf + 1.0) * (kf + 2.0));
        psi = psi_next;
    }
    let i1 = 0.5 * x * i1;
    let k0 = -log_half * i0 + s0;
    let k1 = 1.0 / x + log_half * i1 - 0.25 * x * s1;
    (k0, k1)
}

// Steed's CF2 (Thompson-Barnett) for order zero; returns the scaled pair.
fn k01_steed_scaled(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000u32 {
        let fi = f64::from(i);
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

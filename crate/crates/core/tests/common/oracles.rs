//! Quadrature oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // past this point the difference is rounding noise
    let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= 15.0 * tol || delta.abs() <= noise {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// First and second moment of `N(mu, sigma^2)` on `[t1, t2]` by quadrature.
/// The density is rescaled by its value at the point of the interval
/// closest to `mu`, so far-tail intervals keep full relative accuracy.
pub fn truncated_moments_quadrature(mu: f64, sigma: f64, t1: f64, t2: f64) -> (f64, f64) {
    let near = mu.clamp(t1, t2);
    let d2 = (near - mu) * (near - mu);
    let w = |x: f64| (-((x - mu) * (x - mu) - d2) / (2.0 * sigma * sigma)).exp();
    let reach = 14.0 * sigma;
    let lo = if t1.is_finite() { t1 } else { near - reach };
    let hi = if t2.is_finite() { t2 } else { near + reach };
    // split at the mode so the peak is a node
    let pieces: Vec<(f64, f64)> = if near > lo && near < hi {
        vec![(lo, near), (near, hi)]
    } else {
        vec![(lo, hi)]
    };
    let mut z = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &(a, b) in &pieces {
        z += adaptive_simpson(|x| w(x), a, b, 1e-14);
        s1 += adaptive_simpson(|x| x * w(x), a, b, 1e-14);
        s2 += adaptive_simpson(|x| x * x * w(x), a, b, 1e-14);
    }
    (s1 / z, s2 / z)
}

fn phi(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P`, `E[z1^2]`, `E[z1 z2]`, `E[z2^2]` of a standard bivariate normal with
/// correlation `rho` restricted to the box `[a1, b1] x [a2, b2]`, by
/// one-dimensional quadrature over `z1` of the closed-form inner integrals.
pub fn bivariate_box_moments(rho: f64, a1: f64, b1: f64, a2: f64, b2: f64) -> (f64, f64, f64, f64) {
    let s = (1.0 - rho * rho).sqrt();
    // inner integrals over z2 given z1 of 1, z2, z2^2 times N(rho z1, s^2)
    let inner = |z1: f64| {
        let m = rho * z1;
        let (al, be) = ((a2 - m) / s, (b2 - m) / s);
        let p = big_phi(be) - big_phi(al);
        let e1 = m * p + s * (phi(al) - phi(be));
        let ta = if al.is_finite() { al * phi(al) } else { 0.0 };
        let tb = if be.is_finite() { be * phi(be) } else { 0.0 };
        let e2 = m * m * p + 2.0 * m * s * (phi(al) - phi(be)) + s * s * (p + ta - tb);
        (p, e1, e2)
    };
    let lo = if a1.is_finite() { a1 } else { -12.0 };
    let hi = if b1.is_finite() { b1 } else { 12.0 };
    let tol = 1e-13;
    let p = adaptive_simpson(|z| phi(z) * inner(z).0, lo, hi, tol);
    let m11 = adaptive_simpson(|z| z * z * phi(z) * inner(z).0, lo, hi, tol);
    let m12 = adaptive_simpson(|z| z * phi(z) * inner(z).1, lo, hi, tol);
    let m22 = adaptive_simpson(|z| phi(z) * inner(z).2, lo, hi, tol);
    (p, m11 / p, m12 / p, m22 / p)
}

//! Standard normal functions with tail-accurate evaluation.
//!
//! Everything that touches truncated intervals goes through the scaled
//! complementary error function so that far-tail truncation never divides
//! two underflowed probabilities.

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below this width an interval is treated as a point mass with a linear tilt.
const NARROW_WIDTH: f64 = 1e-5;

#[inline]
pub fn pdf(x: f64) -> f64 {
    if x.is_finite() {
        FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
    } else {
        0.0
    }
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail probability `1 - cdf(x)`.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Scaled complementary error function `exp(x^2) erfc(x)` for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0 || x.is_nan());
    if x < 4.0 {
        (x * x).exp() * libm::erfc(x)
    } else if x.is_infinite() {
        0.0
    } else {
        // Laplace continued fraction, evaluated backwards
        let terms = if x < 10.0 { 120 } else { 40 };
        let mut t = x;
        for k in (1..=terms).rev() {
            t = x + 0.5 * k as f64 / t;
        }
        FRAC_1_SQRT_PI / t
    }
}

pub fn log_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        f64::NEG_INFINITY
    } else if x < 3.0 {
        sf(x).ln()
    } else {
        (0.5 * erfcx(x * std::f64::consts::FRAC_1_SQRT_2)).ln() - 0.5 * x * x
    }
}

#[inline]
pub fn log_cdf(x: f64) -> f64 {
    log_sf(-x)
}

/// Inverse of `cdf`, defined on the open unit interval.
pub fn quantile(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if q >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * q)
}

/// Probability of `[a, b]` under the standard normal.
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        sf(a) - sf(b)
    } else if b <= 0.0 {
        cdf(b) - cdf(a)
    } else {
        1.0 - cdf(a) - sf(b)
    }
}

pub fn log_interval_prob(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        let la = log_sf(a);
        let lb = log_sf(b);
        la + (-(lb - la).exp()).ln_1p()
    } else if b <= 0.0 {
        log_interval_prob(-b, -a)
    } else {
        interval_prob(a, b).ln()
    }
}

/// Mean and second moment of a standard normal truncated to `[a, b]`.
///
/// Callers must ensure `a < b`.
pub fn std_truncated_moments(a: f64, b: f64) -> (f64, f64) {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return (0.0, 1.0);
    }
    let width = b - a;
    let scale = 1.0f64.max(a.abs().min(b.abs()));
    if width < NARROW_WIDTH / scale {
        // density ~ exp(-mid * (x - mid)) on a tiny interval
        let mid = 0.5 * (a + b);
        let var = width * width / 12.0;
        let mean = mid - mid * var;
        return (mean, mean * mean + var);
    }
    if a >= 0.0 {
        upper_tail_moments(a, b)
    } else if b <= 0.0 {
        let (m, s) = upper_tail_moments(-b, -a);
        (-m, s)
    } else {
        let z = interval_prob(a, b);
        let (pa, pb) = (pdf(a), pdf(b));
        let apa = if a.is_finite() { a * pa } else { 0.0 };
        let bpb = if b.is_finite() { b * pb } else { 0.0 };
        let mean = (pa - pb) / z;
        (mean, 1.0 + (apa - bpb) / z)
    }
}

/// Moments on `[a, b]` with `0 <= a < b`, written in terms of `erfcx` so the
/// common factor `exp(-a^2/2)` cancels analytically.
fn upper_tail_moments(a: f64, b: f64) -> (f64, f64) {
    let xa = erfcx(a * std::f64::consts::FRAC_1_SQRT_2);
    let (decay, xb, b_decay) = if b.is_finite() {
        let delta = 0.5 * (b - a) * (b + a);
        let e = (-delta).exp();
        (e, erfcx(b * std::f64::consts::FRAC_1_SQRT_2), b * e)
    } else {
        (0.0, 0.0, 0.0)
    };
    let den = xa - xb * decay;
    let one_minus = if b.is_finite() {
        -(-0.5 * (b - a) * (b + a)).exp_m1()
    } else {
        1.0
    };
    let mean = SQRT_2_OVER_PI * one_minus / den;
    let second = 1.0 + SQRT_2_OVER_PI * (a - b_decay) / den;
    (mean, second)
}

/// Entropy of a normal with mean `mu` and sd `sigma` truncated to `[lo, hi]`.
pub fn truncated_entropy(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return sigma.ln() + 0.5 + LN_SQRT_2PI;
    }
    let (_, second) = std_truncated_moments(a, b);
    // H = ln(sigma sqrt(2 pi e) Z) + (a phi(a) - b phi(b)) / (2 Z)
    sigma.ln() + LN_SQRT_2PI + 0.5 + log_interval_prob(a, b) + 0.5 * (second - 1.0)
}

/// Draws from a standard normal truncated to `[a, b]` and returns the draw
/// together with the log-probability of the interval.
///
/// Inverse-CDF sampling on whichever tail keeps the probabilities well away
/// from 1; exact rejection samplers take over once the tail probability
/// would underflow.
pub fn sample_std_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, f64) {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return (StandardNormal.sample(rng), 0.0);
    }
    if a >= 0.0 {
        sample_upper(a, b, rng)
    } else if b <= 0.0 {
        let (x, lz) = sample_upper(-b, -a, rng);
        (-x, lz)
    } else {
        let pa = cdf(a);
        let pb = cdf(b);
        let z = pb - pa;
        let u: f64 = Open01.sample(rng);
        let x = quantile(pa + u * z).clamp(a, b);
        (x, z.ln())
    }
}

const TAIL_SWITCH: f64 = 30.0;

fn sample_upper<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, f64) {
    if a < TAIL_SWITCH {
        let pa = sf(a);
        let pb = sf(b);
        let z = pa - pb;
        if z > 0.0 {
            let u: f64 = Open01.sample(rng);
            let q = pb + u * z;
            let x = (-quantile(q)).clamp(a, b);
            return (x, z.ln());
        }
    }
    let lz = log_interval_prob(a, b);
    let x = if (b - a) * a < 1.0 {
        // nearly flat over the interval: uniform proposal
        loop {
            let x = a + (b - a) * rng.random::<f64>();
            let accept = (-0.5 * (x - a) * (x + a)).exp();
            if rng.random::<f64>() < accept {
                break x;
            }
        }
    } else {
        // Marsaglia's tail method: Rayleigh proposal shifted to start at a
        loop {
            let u1: f64 = Open01.sample(rng);
            let x = (a * a - 2.0 * u1.ln()).sqrt();
            if x > b {
                continue;
            }
            let u2: f64 = rng.random();
            if u2 * x < a {
                break x;
            }
        }
    };
    (x, lz)
}

use crate::error::{Error, Result};
use serde::Serialize;
use std::io::Write;

const MIN_CHAIN: usize = 100;
const LEVEL: f64 = 0.05;

/// Outcome of the stationarity part of the Heidelberger-Welch diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationarityReport {
    pub passed: bool,
    /// Iterations discarded before the first passing test (or before the
    /// last attempted one on failure).
    pub start: usize,
    pub start_fraction: f64,
    /// Cramer-von Mises statistic of the retained segment.
    pub statistic: f64,
    pub p_value: f64,
    /// p-value of the test on the whole chain.
    pub initial_p_value: f64,
}

/// Spectral density at frequency zero from an autoregressive fit chosen by
/// AIC (Yule-Walker equations, Levinson-Durbin recursion).
fn spectrum0_ar(x: &[f64]) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let max_order = (n - 1).min((10.0 * (n as f64).log10()).floor() as usize);
    let acov: Vec<f64> = (0..=max_order)
        .map(|k| {
            (0..n - k)
                .map(|t| (x[t] - mean) * (x[t + k] - mean))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    if acov[0] <= 0.0 {
        return 0.0;
    }
    let mut phi: Vec<f64> = Vec::new();
    let mut best = (n as f64 * acov[0].ln(), 0usize, acov[0], Vec::new());
    let mut var = acov[0];
    for m in 1..=max_order {
        let num = acov[m] - phi.iter().enumerate().map(|(i, f)| f * acov[m - 1 - i]).sum::<f64>();
        let k = num / var;
        let prev = phi.clone();
        for i in 0..phi.len() {
            phi[i] = prev[i] - k * prev[prev.len() - 1 - i];
        }
        phi.push(k);
        var *= 1.0 - k * k;
        if var <= 0.0 {
            break;
        }
        let aic = n as f64 * var.ln() + 2.0 * m as f64;
        if aic < best.0 {
            best = (aic, m, var, phi.clone());
        }
    }
    let (_, order, var, coef) = best;
    let var_pred = var * n as f64 / (n - (order + 1)) as f64;
    let s: f64 = coef.iter().sum();
    var_pred / ((1.0 - s) * (1.0 - s))
}

/// Modified Bessel function of the second kind, `K_nu(x)` for `x > 0`, from
/// its integral `int_0^inf exp(-x cosh t) cosh(nu t) dt`. The integrand
/// decays doubly exponentially, so the trapezoid rule is spectrally exact.
fn bessel_k(nu: f64, x: f64) -> f64 {
    let upper = (60.0 / x).max(1.0).acosh() + 1.0;
    let h = 0.02;
    let steps = (upper / h).ceil() as usize;
    let mut sum = 0.5 * (-x).exp();
    for i in 1..=steps {
        let t = i as f64 * h;
        sum += (-x * t.cosh()).exp() * (nu * t).cosh();
    }
    sum * h
}

/// Limiting distribution function of the Cramer-von Mises statistic.
///
/// Terms of the series are added until their exponential factor drops below
/// 1e-5; for large statistics this needs more than the first few terms.
pub fn pcramer(q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let cutoff = -(1e-5f64).ln();
    // ratio = Gamma(k + 1/2) / (Gamma(k + 1) sqrt(pi))
    let mut ratio = 1.0;
    let mut total = 0.0;
    for k in 0.. {
        let c = (4 * k + 1) as f64;
        let u = c * c / (16.0 * q);
        if u > cutoff {
            break;
        }
        let z = ratio * c.sqrt() / (std::f64::consts::PI * q.sqrt());
        total += z * (-u).exp() * bessel_k(0.25, u);
        ratio *= (k as f64 + 0.5) / (k as f64 + 1.0);
    }
    total.min(1.0)
}

/// Cramer-von Mises stationarity test, applied to the whole chain and then
/// after discarding 10%, 20%, ..., 50% of it. The spectral density is
/// estimated once from the second half of the chain.
pub fn heidelberger_welch(chain: &[f64]) -> Result<StationarityReport> {
    let n = chain.len();
    if n < MIN_CHAIN {
        return Err(Error::ChainTooShort { len: n, min: MIN_CHAIN });
    }
    let s0 = spectrum0_ar(&chain[n / 2..]);
    let mut last = None;
    let mut initial = f64::NAN;
    for k in 0..=5 {
        let start = k * n / 10;
        let y = &chain[start..];
        let m = y.len() as f64;
        let (statistic, p_value) = if s0 > 0.0 {
            let ybar = y.iter().sum::<f64>() / m;
            let mut cum = 0.0;
            let mut acc = 0.0;
            for (t, v) in y.iter().enumerate() {
                cum += v;
                let b = cum - ybar * (t + 1) as f64;
                acc += b * b;
            }
            let stat = acc / (m * m * s0);
            (stat, 1.0 - pcramer(stat))
        } else {
            (f64::NAN, 0.0)
        };
        if k == 0 {
            initial = p_value;
        }
        let report = StationarityReport {
            passed: p_value > LEVEL,
            start,
            start_fraction: k as f64 / 10.0,
            statistic,
            p_value,
            initial_p_value: initial,
        };
        if report.passed {
            return Ok(report);
        }
        last = Some(report);
    }
    Ok(last.unwrap())
}

pub fn write_stationarity_tsv<W: Write>(reports: &[StationarityReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "chain\tpass\tstart\tstart_fraction\tstatistic\tp_value")?;
    for (i, r) in reports.iter().enumerate() {
        writeln!(
            out,
            "{i}\t{}\t{}\t{}\t{}\t{}",
            r.passed, r.start, r.start_fraction, r.statistic, r.p_value
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn bessel_matches_reference() {
        // scipy.special.kv(0.25, x)
        assert!((bessel_k(0.25, 1.0) - 0.4307397744485814).abs() < 1e-13);
        assert!((bessel_k(0.25, 0.01) - 6.165741264139234).abs() < 1e-11);
        assert!((bessel_k(0.25, 10.0) - 1.7833184439806395e-05).abs() < 1e-17);
    }

    #[test]
    fn pcramer_critical_values() {
        for &(q, p) in &[(0.34730, 0.90), (0.46136, 0.95), (0.74346, 0.99)] {
            assert!((pcramer(q) - p).abs() < 1e-4, "pcramer({q}) = {}", pcramer(q));
        }
        assert_eq!(pcramer(0.0), 0.0);
        assert!(pcramer(50.0) > 0.9999);
        assert!(pcramer(328.0) > 0.9999);
    }

    #[test]
    fn white_noise_passes_at_start() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let chain: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = heidelberger_welch(&chain).unwrap();
        assert!(r.passed);
        assert_eq!(r.start, 0);
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn drift_is_detected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let chain: Vec<f64> = (0..1000)
            .map(|t| {
                let e: f64 = StandardNormal.sample(&mut rng);
                let drift = if t < 500 { 5.0 * (1.0 - t as f64 / 500.0) } else { 0.0 };
                e + drift
            })
            .collect();
        let r = heidelberger_welch(&chain).unwrap();
        assert!(!r.passed || r.start > 0, "{r:?}");
    }

    #[test]
    fn short_chain_rejected() {
        assert!(matches!(heidelberger_welch(&[0.0; 50]), Err(Error::ChainTooShort { .. })));
    }

    #[test]
    fn ar1_spectrum() {
        // AR(1) with coefficient 0.5 and unit innovations: S0 = 1 / 0.25
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut x = 0.0;
        let chain: Vec<f64> = (0..20000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = 0.5 * x + e;
                x
            })
            .collect();
        let s0 = spectrum0_ar(&chain);
        assert!((s0 - 4.0).abs() < 0.3, "{s0}");
    }
}

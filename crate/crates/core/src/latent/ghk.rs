use crate::data::{CutPointTable, GenotypeMatrix};
use crate::error::{Error, Result};
use crate::normal::sample_std_truncated;
use crate::rng::rng_for;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::collections::HashMap;

const GHK_TAG: u64 = 0x4748_4b00;

/// Simulated log-probability of the observed cells,
/// `sum_i log P(c_lo < z_i <= c_hi)` for `z ~ N(0, sigma)`, using the
/// Geweke-Hajivassiliou-Keane recursion with `draws` paths per sample.
/// Missing coordinates are marginalised out exactly. Each sample uses its
/// own stream derived from `seed`, so estimates at different `sigma` share
/// random numbers.
pub fn ghk_log_likelihood(
    g: &GenotypeMatrix,
    cuts: &CutPointTable,
    sigma: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let p = g.p();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::Dimension(format!("sigma is not {p}x{p}")));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    cuts.check_consistent(g)?;

    // Cholesky factor (row-major lower triangle) per missingness pattern
    let mut factors: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    let mut observed: Vec<Vec<usize>> = Vec::with_capacity(g.n());
    for i in 0..g.n() {
        let obs: Vec<usize> = (0..p).filter(|&j| g.get(i, j).is_some()).collect();
        if !factors.contains_key(&obs) {
            let q = obs.len();
            let sub = DMatrix::from_fn(q, q, |a, b| sigma[(obs[a], obs[b])]);
            let l = sub.cholesky().ok_or(Error::NotPositiveDefinite("sigma"))?.l();
            let mut rows = vec![0.0; q * q];
            for a in 0..q {
                for b in 0..=a {
                    rows[a * q + b] = l[(a, b)];
                }
            }
            factors.insert(obs.clone(), rows);
        }
        observed.push(obs);
    }

    let per_sample: Vec<f64> = (0..g.n())
        .into_par_iter()
        .map(|i| {
            let obs = &observed[i];
            let l = &factors[obs];
            let q = obs.len();
            let bounds: Vec<(f64, f64)> =
                obs.iter().map(|&j| cuts.interval(j, g.get(i, j))).collect();
            let mut rng = rng_for(seed, &[GHK_TAG, i as u64]);
            let mut e = vec![0.0; q];
            let mut logw = Vec::with_capacity(draws);
            for _ in 0..draws {
                let mut lw = 0.0;
                for a in 0..q {
                    let row = &l[a * q..a * q + a];
                    let mu: f64 = row.iter().zip(&e[..a]).map(|(x, y)| x * y).sum();
                    let d = l[a * q + a];
                    let (lo, hi) = bounds[a];
                    let (x, lz) = sample_std_truncated((lo - mu) / d, (hi - mu) / d, &mut rng);
                    e[a] = x;
                    lw += lz;
                }
                logw.push(lw);
            }
            let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return m;
            }
            m + (logw.iter().map(|v| (v - m).exp()).sum::<f64>() / draws as f64).ln()
        })
        .collect();
    Ok(per_sample.iter().sum())
}

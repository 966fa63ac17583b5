//! Conditional latent moments for the E-step.
//!
//! Given a precision matrix and the interval each observed genotype pins
//! its latent coordinate to, these routines estimate the average second
//! moment matrix of the latent rows, either by Gibbs sampling or by a
//! mean-field fixed point.

mod approx;
mod gibbs;
mod ghk;
mod heidel;

pub use approx::approx_expected_covariance;
pub use gibbs::{gibbs_expected_covariance, sample_truncated_mvn, GibbsSampler};
pub use ghk::ghk_log_likelihood;
pub use heidel::{heidelberger_welch, pcramer, write_stationarity_tsv, StationarityReport};

use crate::error::{Error, Result};
use crate::normal;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EStepMethod {
    Gibbs,
    Approx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GibbsConfig {
    /// Retained sweeps per sample.
    pub sweeps: usize,
    /// Sweeps discarded before the first E-step.
    pub burn_in: usize,
    /// Sweeps discarded on later calls of a persistent sampler, whose chains
    /// already sit near the previous target.
    pub warm_burn_in: usize,
    pub seed: u64,
    /// Number of leading samples whose chains are recorded for diagnostics.
    pub trace: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            sweeps: 1000,
            burn_in: 1000,
            warm_burn_in: 100,
            seed: 0,
            trace: 0,
        }
    }
}

impl GibbsConfig {
    pub fn check(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidArgument("Gibbs sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// E-step output.
#[derive(Clone, Debug)]
pub struct ExpectedMoments {
    pub rbar: DMatrix<f64>,
    /// Per-sample conditional means (n x p), mean-field only.
    pub means: Option<DMatrix<f64>>,
    pub method: EStepMethod,
    /// Entropy of the latent rows given the genotypes, summed over samples.
    pub entropy: f64,
    /// Recorded chains: mean squared latent value of a sample per sweep.
    pub traces: Vec<Vec<f64>>,
}

/// First and second moment of `N(mu0, sigma0^2)` truncated to `[t1, t2]`.
pub fn truncated_normal_moments(mu0: f64, sigma0: f64, t1: f64, t2: f64) -> Result<(f64, f64)> {
    if !(t1 < t2) {
        return Err(Error::InvalidInterval {
            lower: t1,
            upper: t2,
        });
    }
    if !(sigma0 > 0.0) || !sigma0.is_finite() || !mu0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need finite mean and positive sd, got ({mu0}, {sigma0})"
        )));
    }
    let a = (t1 - mu0) / sigma0;
    let b = (t2 - mu0) / sigma0;
    let (m, s) = normal::std_truncated_moments(a, b);
    let m1 = mu0 + sigma0 * m;
    let var = (sigma0 * sigma0 * (s - m * m)).max(0.0);
    Ok((m1, m1 * m1 + var))
}

/// Lower and upper latent bounds of every cell, row-major.
pub(crate) fn cell_bounds(
    g: &crate::data::GenotypeMatrix,
    cuts: &crate::data::CutPointTable,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cuts.check_consistent(g)?;
    let mut lo = Vec::with_capacity(g.n() * g.p());
    let mut hi = Vec::with_capacity(g.n() * g.p());
    for i in 0..g.n() {
        for (j, &y) in g.row(i).iter().enumerate() {
            let (a, b) = cuts.interval(j, y);
            lo.push(a);
            hi.push(b);
        }
    }
    Ok((lo, hi))
}

pub(crate) fn check_theta(theta: &DMatrix<f64>, p: usize) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if theta.nrows() != p || theta.ncols() != p {
        return Err(Error::Dimension(format!(
            "theta is {}x{}, expected {p}x{p}",
            theta.nrows(),
            theta.ncols()
        )));
    }
    theta
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("theta"))
}

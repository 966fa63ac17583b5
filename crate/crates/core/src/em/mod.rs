//! Penalised EM for the copula graphical model, the penalty path and model
//! selection.

mod path;
mod select;

pub use path::{default_lambdas, fit_path, DEFAULT_FLOOR, DEFAULT_GRID, fit_path_with, PathEntry, PrecisionPath};
pub use select::{
    argmin_score, ebic_scores, ebic_select, ebic_values, select_index, stars_select, Selection, StarsResult, Subsampling,
};

use crate::data::{CutPointTable, GenotypeMatrix};
use crate::error::{Error, Result};
use crate::glasso::{glasso_fit, GlassoOptions, GlassoSolution};
use crate::latent::{
    approx_expected_covariance, EStepMethod, ExpectedMoments, GibbsConfig, GibbsSampler,
};
use crate::normal;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    NormalScores,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EMConfig {
    pub e_step: EStepMethod,
    pub em_max_iter: usize,
    /// Relative Frobenius change of theta below which EM stops.
    pub em_tol: f64,
    pub gibbs: GibbsConfig,
    pub init: Init,
    pub glasso: GlassoOptions,
}

impl Default for EMConfig {
    fn default() -> Self {
        Self {
            e_step: EStepMethod::Gibbs,
            em_max_iter: 10,
            em_tol: 1e-3,
            gibbs: GibbsConfig::default(),
            init: Init::NormalScores,
            glasso: GlassoOptions::default(),
        }
    }
}

impl EMConfig {
    pub fn check(&self) -> Result<()> {
        if self.em_max_iter == 0 {
            return Err(Error::InvalidArgument("em_max_iter must be at least 1".into()));
        }
        if !(self.em_tol > 0.0) {
            return Err(Error::InvalidArgument("em_tol must be positive".into()));
        }
        self.gibbs.check()
    }
}

/// Likelihood quantities of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitDiagnostics {
    /// Expected complete-data log-likelihood.
    pub q: f64,
    /// Expected log-density of the latent rows given the genotypes.
    pub h: f64,
    /// Observed log-likelihood, `q - h`.
    pub loglik: f64,
    /// Unpenalised fit of the model to the final moment matrix, without the
    /// constant terms.
    pub loglik_model: f64,
    pub loglik_saturated: f64,
    pub deviance: f64,
    pub deviance_df: usize,
    pub p_value: f64,
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub solution: GlassoSolution,
    pub moments: ExpectedMoments,
    pub diagnostics: FitDiagnostics,
    pub iterations: usize,
    pub converged: bool,
}

/// Dispatches E-steps, keeping Gibbs chains alive between calls.
pub struct EStep<'a> {
    g: &'a GenotypeMatrix,
    cuts: &'a CutPointTable,
    sampler: Option<GibbsSampler>,
}

impl<'a> EStep<'a> {
    pub fn new(g: &'a GenotypeMatrix, cuts: &'a CutPointTable, cfg: &EMConfig) -> Result<Self> {
        cuts.check_consistent(g)?;
        let sampler = match cfg.e_step {
            EStepMethod::Gibbs => Some(GibbsSampler::new(g, cuts, cfg.gibbs.clone())?),
            EStepMethod::Approx => None,
        };
        Ok(Self { g, cuts, sampler })
    }

    /// Runs the E-step at `theta` after rescaling it to unit latent
    /// variances. Returns the moments and the rescaled precision.
    pub fn run(&mut self, theta: &DMatrix<f64>) -> Result<(ExpectedMoments, DMatrix<f64>)> {
        let scaled = unit_variance(theta)?;
        let m = match &mut self.sampler {
            Some(s) => s.estep(&scaled)?,
            None => approx_expected_covariance(self.g, self.cuts, &scaled)?,
        };
        Ok((m, scaled))
    }
}

/// Rescales a precision matrix so that its inverse has unit diagonal. The
/// cut-points live on the scale of a standard normal marginal.
pub fn unit_variance(theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sigma = theta
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("theta"))?
        .inverse();
    let d: Vec<f64> = (0..theta.nrows()).map(|i| sigma[(i, i)].sqrt()).collect();
    Ok(DMatrix::from_fn(theta.nrows(), theta.ncols(), |i, j| {
        d[i] * theta[(i, j)] * d[j]
    }))
}

pub(crate) fn log_det(m: &DMatrix<f64>) -> Option<f64> {
    let c = m.clone().cholesky()?;
    Some(c.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}

fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Initial precision matrix: the inverse of a ridge-regularised correlation
/// matrix of per-marker normal scores, or the identity.
pub fn initial_theta(g: &GenotypeMatrix, init: Init) -> DMatrix<f64> {
    let (n, p) = (g.n(), g.p());
    if init == Init::Identity || n < 2 {
        return DMatrix::identity(p, p);
    }
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        let counts = g.category_counts(j);
        let m: usize = counts.iter().sum();
        // midrank score of each category
        let mut below = 0usize;
        let scores: Vec<f64> = counts
            .iter()
            .map(|&c| {
                let mid = below as f64 + (c as f64 + 1.0) / 2.0;
                below += c;
                normal::quantile(mid / (m + 1) as f64)
            })
            .collect();
        let col: Vec<f64> = g.column(j).map(|y| y.map_or(0.0, |y| scores[y as usize])).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        for (i, v) in col.iter().enumerate() {
            x[(i, j)] = if sd > 0.0 { (v - mean) / sd } else { 0.0 };
        }
    }
    let mut c = x.tr_mul(&x) / n as f64;
    for j in 0..p {
        c[(j, j)] = 1.0 + 0.01;
    }
    c.cholesky()
        .map(|ch| ch.inverse())
        .unwrap_or_else(|| DMatrix::identity(p, p))
}

/// Likelihood diagnostics of precision `theta` (glasso output) fitted to the
/// moments `m`, which were computed at the unit-variance precision `scaled`.
pub fn diagnostics(
    theta: &DMatrix<f64>,
    scaled: &DMatrix<f64>,
    m: &ExpectedMoments,
    n: usize,
    edges: usize,
) -> Result<FitDiagnostics> {
    let p = theta.nrows();
    let nf = n as f64;
    let ld_scaled = log_det(scaled).ok_or(Error::NotPositiveDefinite("theta"))?;
    let q = 0.5
        * nf
        * (ld_scaled
            - trace_product(&m.rbar, scaled)
            - p as f64 * (2.0 * std::f64::consts::PI).ln());
    let h = -m.entropy;
    let ld_theta = log_det(theta).ok_or(Error::NotPositiveDefinite("theta"))?;
    let ld_rbar = log_det(&m.rbar).ok_or(Error::NotPositiveDefinite("second-moment matrix"))?;
    let loglik_model = 0.5 * nf * (ld_theta - trace_product(&m.rbar, theta));
    let loglik_saturated = -0.5 * nf * ld_rbar - 0.5 * nf * p as f64;
    let deviance = -2.0 * (loglik_model - loglik_saturated);
    let deviance_df = p * (p - 1) / 2 - edges;
    let p_value = if deviance_df == 0 {
        1.0
    } else {
        ChiSquared::new(deviance_df as f64)
            .map(|d| d.sf(deviance.max(0.0)))
            .unwrap_or(f64::NAN)
    };
    Ok(FitDiagnostics {
        q,
        h,
        loglik: q - h,
        loglik_model,
        loglik_saturated,
        deviance,
        deviance_df,
        p_value,
    })
}

/// EM at a fixed penalty using a caller-owned E-step (so Gibbs chains carry
/// over along a path).
pub fn fit_em_with(
    estep: &mut EStep<'_>,
    lambda: f64,
    cfg: &EMConfig,
    start: &DMatrix<f64>,
    warm: Option<&GlassoSolution>,
) -> Result<EmFit> {
    cfg.check()?;
    let n = estep.g.n();
    let p = estep.g.p();
    let mut theta = start.clone();
    let mut prev_sol: Option<GlassoSolution> = warm.cloned();
    let mut last = None;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.em_max_iter {
        iterations += 1;
        let (m, scaled) = estep.run(&theta)?;
        let sol = glasso_fit(&m.rbar, lambda, &cfg.glasso, prev_sol.as_ref())?;
        if sol.theta.clone().cholesky().is_none() {
            log::warn!("non positive definite update at lambda {lambda}; restarting from identity");
            theta = DMatrix::identity(p, p);
            prev_sol = None;
            continue;
        }
        let change = (&sol.theta - &theta).norm() / theta.norm().max(f64::MIN_POSITIVE);
        theta = sol.theta.clone();
        prev_sol = Some(sol.clone());
        last = Some((sol, m, scaled));
        if change < cfg.em_tol {
            converged = true;
            break;
        }
    }
    let (solution, moments, scaled) =
        last.ok_or(Error::NotPositiveDefinite("every EM update"))?;
    let diagnostics = diagnostics(&solution.theta, &scaled, &moments, n, solution.df())?;
    Ok(EmFit {
        solution,
        moments,
        diagnostics,
        iterations,
        converged,
    })
}

/// EM at a single penalty with a fresh E-step.
pub fn fit_em(
    g: &GenotypeMatrix,
    cuts: &CutPointTable,
    lambda: f64,
    cfg: &EMConfig,
    warm: Option<&DMatrix<f64>>,
) -> Result<EmFit> {
    let mut estep = EStep::new(g, cuts, cfg)?;
    let start = match warm {
        Some(t) => t.clone(),
        None => initial_theta(g, cfg.init),
    };
    fit_em_with(&mut estep, lambda, cfg, &start, None)
}

pub fn observed_loglik(fit: &EmFit) -> f64 {
    fit.diagnostics.loglik
}

pub fn deviance_test(fit: &EmFit) -> &FitDiagnostics {
    &fit.diagnostics
}

/// `-theta_ij / sqrt(theta_ii theta_jj)` with unit diagonal.
pub fn partial_correlations(theta: &DMatrix<f64>) -> DMatrix<f64> {
    let p = theta.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt()
        }
    })
}

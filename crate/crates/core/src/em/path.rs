use super::{fit_em_with, initial_theta, EMConfig, EStep, EmFit};
use crate::data::{CutPointTable, GenotypeMatrix};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const DEFAULT_GRID: usize = 30;
pub const DEFAULT_FLOOR: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct PathEntry {
    pub lambda: f64,
    pub fit: Option<EmFit>,
    pub error: Option<String>,
}

/// Fits along a descending penalty grid.
#[derive(Clone, Debug)]
pub struct PrecisionPath {
    pub n: usize,
    pub p: usize,
    pub entries: Vec<PathEntry>,
}

impl PrecisionPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }

    /// Edge counts; `None` for failed entries.
    pub fn df(&self) -> Vec<Option<usize>> {
        self.entries
            .iter()
            .map(|e| e.fit.as_ref().map(|f| f.solution.df()))
            .collect()
    }

    pub fn logliks(&self) -> Vec<Option<f64>> {
        self.entries
            .iter()
            .map(|e| e.fit.as_ref().map(|f| f.diagnostics.loglik))
            .collect()
    }

    pub fn fit(&self, k: usize) -> Option<&EmFit> {
        self.entries.get(k).and_then(|e| e.fit.as_ref())
    }
}

/// `count` log-spaced values from the largest off-diagonal magnitude of
/// `rbar` down to `floor` times that value.
pub fn default_lambdas(rbar: &DMatrix<f64>, count: usize, floor: f64) -> Vec<f64> {
    let p = rbar.nrows();
    let mut lmax: f64 = 0.0;
    for i in 0..p {
        for j in i + 1..p {
            lmax = lmax.max(rbar[(i, j)].abs());
        }
    }
    if lmax <= 0.0 {
        lmax = 1e-3;
    }
    if count == 1 {
        return vec![lmax];
    }
    let (hi, lo) = (lmax.ln(), (lmax * floor).ln());
    (0..count)
        .map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Path fit with an explicit grid, or the default grid built from the
/// E-step at the initial precision when `lambdas` is `None`.
pub fn fit_path(
    g: &GenotypeMatrix,
    cuts: &CutPointTable,
    lambdas: Option<&[f64]>,
    cfg: &EMConfig,
) -> Result<PrecisionPath> {
    let mut estep = EStep::new(g, cuts, cfg)?;
    fit_path_with(&mut estep, g, lambdas, cfg)
}

pub fn fit_path_with(
    estep: &mut EStep<'_>,
    g: &GenotypeMatrix,
    lambdas: Option<&[f64]>,
    cfg: &EMConfig,
) -> Result<PrecisionPath> {
    cfg.check()?;
    let theta0 = initial_theta(g, cfg.init);
    let grid = match lambdas {
        Some(l) => l.to_vec(),
        None => {
            let (m, _) = estep.run(&theta0)?;
            default_lambdas(&m.rbar, DEFAULT_GRID, DEFAULT_FLOOR)
        }
    };
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidArgument("penalty grid must be strictly descending".into()));
    }
    let mut entries = Vec::with_capacity(grid.len());
    let mut start = theta0.clone();
    let mut warm = None;
    for &lambda in &grid {
        match fit_em_with(estep, lambda, cfg, &start, warm.as_ref()) {
            Ok(fit) => {
                start = fit.solution.theta.clone();
                warm = Some(fit.solution.clone());
                entries.push(PathEntry {
                    lambda,
                    fit: Some(fit),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("fit at lambda {lambda} failed: {e}");
                entries.push(PathEntry {
                    lambda,
                    fit: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(PrecisionPath {
        n: g.n(),
        p: g.p(),
        entries,
    })
}

use super::{fit_path, EMConfig, PrecisionPath};
use crate::data::{CutPointTable, GenotypeMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const STARS_TAG: u64 = 0x5354_4152;

/// `-2 loglik + (ln n + 4 gamma ln p) df` for every successful entry.
pub fn ebic_scores(path: &PrecisionPath, gamma: f64) -> Vec<Option<f64>> {
    let fits: Vec<Option<(f64, usize)>> = path
        .entries
        .iter()
        .map(|e| e.fit.as_ref().map(|f| (f.diagnostics.loglik, f.solution.df())))
        .collect();
    ebic_values(&fits, path.n, path.p, gamma)
}

/// Extended BIC from `(loglik, edges)` pairs.
pub fn ebic_values(fits: &[Option<(f64, usize)>], n: usize, p: usize, gamma: f64) -> Vec<Option<f64>> {
    let weight = (n as f64).ln() + 4.0 * gamma * (p as f64).max(1.0).ln();
    fits.iter()
        .map(|f| f.map(|(l, df)| -2.0 * l + weight * df as f64))
        .collect()
}

/// Position of the smallest finite score; the first one wins ties.
pub fn argmin_score(scores: &[Option<f64>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in scores.iter().enumerate() {
        if let Some(s) = s.filter(|s| s.is_finite()) {
            if best.map_or(true, |(_, b)| s < b) {
                best = Some((k, s));
            }
        }
    }
    best.map(|(k, _)| k).ok_or(Error::EmptyPath)
}

/// Index of the entry minimising the extended BIC. Ties go to the larger
/// penalty, which comes first on a descending grid.
pub fn ebic_select(path: &PrecisionPath, gamma: f64) -> Result<usize> {
    argmin_score(&ebic_scores(path, gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Subsampling {
    Random,
    /// Every subsample uses the same rows; instability is then zero.
    Identical,
}

#[derive(Clone, Debug, Serialize)]
pub struct StarsResult {
    pub index: usize,
    pub lambda: f64,
    pub subsample_size: usize,
    /// Mean edge-selection variance per penalty.
    pub instability: Vec<f64>,
    /// Running maximum of `instability` from the largest penalty down.
    pub monotone: Vec<f64>,
}

pub fn stars_subsample_size(n: usize) -> usize {
    let a = (10.0 * (n as f64).sqrt()).floor() as usize;
    let b = (0.8 * n as f64).floor() as usize;
    a.min(b).max(2)
}

/// Stability selection of the penalty: the smallest penalty whose
/// monotonised instability stays at or below `cut`.
#[allow(clippy::too_many_arguments)]
pub fn stars_select(
    g: &GenotypeMatrix,
    cuts: &CutPointTable,
    lambdas: &[f64],
    cfg: &EMConfig,
    subsamples: usize,
    cut: f64,
    sampling: Subsampling,
    seed: u64,
) -> Result<StarsResult> {
    if subsamples < 2 {
        return Err(Error::InvalidArgument("StARS needs at least two subsamples".into()));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    let n = g.n();
    let p = g.p();
    let size = stars_subsample_size(n);
    let pairs = p * (p - 1) / 2;

    let runs: Vec<Result<Vec<Option<Vec<bool>>>>> = (0..subsamples)
        .into_par_iter()
        .map(|b| {
            let draw = match sampling {
                Subsampling::Random => b as u64,
                Subsampling::Identical => 0,
            };
            let mut rng = rng_for(seed, &[STARS_TAG, draw]);
            let mut rows = rand::seq::index::sample(&mut rng, n, size).into_vec();
            rows.sort_unstable();
            let sub = g.select_rows(&rows);
            let mut c = cfg.clone();
            c.gibbs.seed = derive_seed(seed, &[STARS_TAG, draw, 1]);
            let path = fit_path(&sub, cuts, Some(lambdas), &c)?;
            Ok(path
                .entries
                .iter()
                .map(|e| {
                    e.fit.as_ref().map(|f| {
                        let t = &f.solution.theta;
                        let mut edges = Vec::with_capacity(pairs);
                        for i in 0..p {
                            for j in i + 1..p {
                                edges.push(t[(i, j)] != 0.0);
                            }
                        }
                        edges
                    })
                })
                .collect())
        })
        .collect();

    let mut counts = vec![vec![0u32; pairs]; lambdas.len()];
    let mut fits = vec![0u32; lambdas.len()];
    for run in runs {
        for (k, edges) in run?.into_iter().enumerate() {
            if let Some(edges) = edges {
                fits[k] += 1;
                for (c, e) in counts[k].iter_mut().zip(edges) {
                    *c += e as u32;
                }
            }
        }
    }
    let instability: Vec<f64> = counts
        .iter()
        .zip(&fits)
        .map(|(c, &m)| {
            if m == 0 || pairs == 0 {
                return 0.0;
            }
            c.iter()
                .map(|&x| {
                    let f = x as f64 / m as f64;
                    2.0 * f * (1.0 - f)
                })
                .sum::<f64>()
                / pairs as f64
        })
        .collect();
    let mut monotone = Vec::with_capacity(instability.len());
    let mut run_max: f64 = 0.0;
    for &d in &instability {
        run_max = run_max.max(d);
        monotone.push(run_max);
    }
    let index = monotone.iter().rposition(|&d| d <= cut).unwrap_or(0);
    Ok(StarsResult {
        index,
        lambda: lambdas[index],
        subsample_size: size,
        instability,
        monotone,
    })
}

/// Penalty selection rule applied to a fitted path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Selection {
    Ebic { gamma: f64 },
    Stars { subsamples: usize, cut: f64 },
}

impl Default for Selection {
    fn default() -> Self {
        Selection::Ebic { gamma: 0.5 }
    }
}

/// Index of the selected entry of `path`, which must have been fitted to `g`.
pub fn select_index(
    path: &PrecisionPath,
    g: &GenotypeMatrix,
    cuts: &CutPointTable,
    cfg: &EMConfig,
    selection: &Selection,
    seed: u64,
) -> Result<usize> {
    let k = match *selection {
        Selection::Ebic { gamma } => ebic_select(path, gamma)?,
        Selection::Stars { subsamples, cut } => {
            let lambdas = path.lambdas();
            let r = stars_select(g, cuts, &lambdas, cfg, subsamples, cut, Subsampling::Random, seed)?;
            r.index
        }
    };
    if path.fit(k).is_none() {
        // StARS may land on an entry whose full-data fit failed
        return ebic_select(path, 0.5);
    }
    Ok(k)
}

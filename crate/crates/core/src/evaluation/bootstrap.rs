//! Non-parametric bootstrap of the whole estimation pipeline.

use crate::data::{estimate_cutpoints, GenotypeMatrix};
use crate::em::{fit_path, select_index, EMConfig, Selection};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const BOOT_TAG: u64 = 0x424f_4f54;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    WithReplacement,
    /// Replicates reuse the original rows and seed; for testing.
    Identity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub em: EMConfig,
    pub selection: Selection,
    pub seed: u64,
    pub resample: Resample,
}

#[derive(Clone, Debug)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub succeeded: usize,
    /// Replicate index and error message of every failed replicate.
    pub failures: Vec<(usize, String)>,
    /// Selected precision matrix on the original data.
    pub theta: DMatrix<f64>,
    /// For edges of the original fit, the fraction of successful replicates
    /// whose entry has the same sign; for other pairs, the fraction in
    /// which the edge was selected at all.
    pub frequency: DMatrix<f64>,
    pub positive: DMatrix<f64>,
    pub negative: DMatrix<f64>,
    /// Pairs `(i, j)`, `i < j`, present in the original fit or in at least
    /// one replicate.
    pub tracked: Vec<(usize, usize)>,
}

/// Cut-points, path and selection on one data set; returns the selected
/// precision matrix.
fn pipeline(g: &GenotypeMatrix, cfg: &BootstrapConfig, seed: u64) -> Result<DMatrix<f64>> {
    let mut g = g.clone();
    g.collapse_empty_categories();
    let cuts = estimate_cutpoints(&g)?;
    let mut em = cfg.em.clone();
    em.gibbs.seed = seed;
    let path = fit_path(&g, &cuts, None, &em)?;
    let k = select_index(&path, &g, &cuts, &em, &cfg.selection, derive_seed(seed, &[1]))?;
    let fit = path.fit(k).ok_or(Error::EmptyPath)?;
    Ok(fit.solution.theta.clone())
}

pub fn bootstrap_network(g: &GenotypeMatrix, cfg: &BootstrapConfig) -> Result<BootstrapSummary> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("at least one replicate is required".into()));
    }
    cfg.em.check()?;
    let (n, p) = (g.n(), g.p());
    let original_seed = derive_seed(cfg.seed, &[BOOT_TAG]);
    let theta = pipeline(g, cfg, original_seed)?;

    let runs: Vec<Result<DMatrix<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| match cfg.resample {
            Resample::Identity => pipeline(g, cfg, original_seed),
            Resample::WithReplacement => {
                let mut rng = rng_for(cfg.seed, &[BOOT_TAG, b as u64]);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let seed = derive_seed(cfg.seed, &[BOOT_TAG, b as u64, 1]);
                pipeline(&g.select_rows(&rows), cfg, seed)
            }
        })
        .collect();

    let mut pos = DMatrix::<f64>::zeros(p, p);
    let mut neg = DMatrix::<f64>::zeros(p, p);
    let mut failures = Vec::new();
    let mut succeeded = 0usize;
    for (b, run) in runs.into_iter().enumerate() {
        match run {
            Ok(t) if t.nrows() == p => {
                succeeded += 1;
                for i in 0..p {
                    for j in i + 1..p {
                        if t[(i, j)] > 0.0 {
                            pos[(i, j)] += 1.0;
                        } else if t[(i, j)] < 0.0 {
                            neg[(i, j)] += 1.0;
                        }
                    }
                }
            }
            Ok(_) => failures.push((b, "dimension changed".to_string())),
            Err(e) => {
                log::warn!("bootstrap replicate {b} failed: {e}");
                failures.push((b, e.to_string()));
            }
        }
    }

    let mut frequency = DMatrix::<f64>::zeros(p, p);
    let mut tracked = Vec::new();
    let denom = succeeded.max(1) as f64;
    for i in 0..p {
        for j in i + 1..p {
            pos[(i, j)] /= denom;
            neg[(i, j)] /= denom;
            pos[(j, i)] = pos[(i, j)];
            neg[(j, i)] = neg[(i, j)];
            let o = theta[(i, j)];
            let f = if o > 0.0 {
                pos[(i, j)]
            } else if o < 0.0 {
                neg[(i, j)]
            } else {
                pos[(i, j)] + neg[(i, j)]
            };
            if o != 0.0 || f > 0.0 {
                tracked.push((i, j));
            }
            frequency[(i, j)] = f;
            frequency[(j, i)] = f;
        }
    }
    Ok(BootstrapSummary {
        replicates: cfg.replicates,
        succeeded,
        failures,
        theta,
        frequency,
        positive: pos,
        negative: neg,
        tracked,
    })
}

//! Rank-based correlation estimates fed to the plain graphical lasso.

use crate::data::GenotypeMatrix;
use crate::em::{argmin_score, ebic_values, log_det};
use crate::error::{Error, Result};
use crate::glasso::{glasso_fit, GlassoOptions, GlassoSolution};
use crate::normal;
use nalgebra::DMatrix;
use std::f64::consts::PI;

const CLIP: f64 = 0.999;
const EIGEN_FLOOR: f64 = 1e-4;

fn check_columns(g: &GenotypeMatrix) -> Result<()> {
    for j in 0..g.p() {
        if g.category_counts(j).iter().filter(|&&c| c > 0).count() < 2 {
            return Err(Error::DegenerateMarker {
                col: j,
                name: g.names()[j].clone(),
            });
        }
    }
    Ok(())
}

/// Kendall's tau-b over the rows where both columns are observed, from the
/// contingency table of the two ordinal variables.
fn tau_b(g: &GenotypeMatrix, a: usize, b: usize) -> f64 {
    let (ka, kb) = (g.states()[a], g.states()[b]);
    let mut t = vec![0f64; ka * kb];
    for i in 0..g.n() {
        if let (Some(x), Some(y)) = (g.get(i, a), g.get(i, b)) {
            t[x as usize * kb + y as usize] += 1.0;
        }
    }
    let mut concordant = 0.0;
    let mut discordant = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = t[x * kb + y];
            if c == 0.0 {
                continue;
            }
            for x2 in x + 1..ka {
                for y2 in 0..kb {
                    let d = t[x2 * kb + y2];
                    if y2 > y {
                        concordant += c * d;
                    } else if y2 < y {
                        discordant += c * d;
                    }
                }
            }
        }
    }
    let m: f64 = t.iter().sum();
    let pairs = m * (m - 1.0) / 2.0;
    let rows: f64 = (0..ka)
        .map(|x| {
            let r: f64 = t[x * kb..(x + 1) * kb].iter().sum();
            r * (r - 1.0) / 2.0
        })
        .sum();
    let cols: f64 = (0..kb)
        .map(|y| {
            let c: f64 = (0..ka).map(|x| t[x * kb + y]).sum();
            c * (c - 1.0) / 2.0
        })
        .sum();
    let denom = ((pairs - rows) * (pairs - cols)).sqrt();
    if denom > 0.0 {
        (concordant - discordant) / denom
    } else {
        0.0
    }
}

/// Sine-transformed Kendall's tau-b matrix, clipped and repaired to be
/// positive definite.
pub fn npn_tau(g: &GenotypeMatrix) -> Result<DMatrix<f64>> {
    check_columns(g)?;
    let p = g.p();
    let mut r = DMatrix::identity(p, p);
    for a in 0..p {
        for b in a + 1..p {
            let v = (PI / 2.0 * tau_b(g, a, b)).sin().clamp(-CLIP, CLIP);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    repair_correlation(&r)
}

/// Pearson correlation of Winsorized normal scores over pairwise complete
/// rows, clipped and repaired to be positive definite.
pub fn npn_ns(g: &GenotypeMatrix) -> Result<DMatrix<f64>> {
    check_columns(g)?;
    let (n, p) = (g.n(), g.p());
    let mut scores: Vec<Vec<Option<f64>>> = Vec::with_capacity(p);
    for j in 0..p {
        let counts = g.category_counts(j);
        let m: usize = counts.iter().sum();
        let mf = m as f64;
        let delta = 1.0 / (4.0 * mf.powf(0.25) * (PI * mf.ln()).sqrt());
        let delta = if delta.is_finite() { delta.min(0.5) } else { 0.5 };
        let mut below = 0usize;
        let cat: Vec<f64> = counts
            .iter()
            .map(|&c| {
                let mid = below as f64 + (c as f64 + 1.0) / 2.0;
                below += c;
                normal::quantile((mid / mf).clamp(delta, 1.0 - delta))
            })
            .collect();
        scores.push(g.column(j).map(|y| y.map(|y| cat[y as usize])).collect());
    }
    let mut r = DMatrix::identity(p, p);
    for a in 0..p {
        for b in a + 1..p {
            let pairs: Vec<(f64, f64)> = (0..n)
                .filter_map(|i| Some((scores[a][i]?, scores[b][i]?)))
                .collect();
            let v = pearson(&pairs).clamp(-CLIP, CLIP);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    repair_correlation(&r)
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let m = pairs.len() as f64;
    if m < 2.0 {
        return 0.0;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    }
}

/// Clips eigenvalues below 1e-4 and rescales to unit diagonal. Matrices
/// already above the floor are returned unchanged.
pub fn repair_correlation(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = r.nrows();
    if r.ncols() != p {
        return Err(Error::Dimension(format!("correlation is {}x{}", p, r.ncols())));
    }
    let eig = r.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= EIGEN_FLOOR {
        return Ok(r.clone());
    }
    let d = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let m = v * DMatrix::from_diagonal(&d) * v.transpose();
    let s: Vec<f64> = (0..p).map(|i| m[(i, i)].sqrt()).collect();
    let mut out = DMatrix::from_fn(p, p, |i, j| m[(i, j)] / (s[i] * s[j]));
    for i in 0..p {
        out[(i, i)] = 1.0;
        for j in i + 1..p {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Graphical lasso path on a fixed correlation estimate.
#[derive(Clone, Debug)]
pub struct BaselinePath {
    pub n: usize,
    pub p: usize,
    pub lambdas: Vec<f64>,
    pub solutions: Vec<Option<GlassoSolution>>,
    /// Gaussian log-likelihood `(n/2)(log|theta| - tr(S theta))`.
    pub logliks: Vec<Option<f64>>,
}

impl BaselinePath {
    pub fn ebic_scores(&self, gamma: f64) -> Vec<Option<f64>> {
        let fits: Vec<Option<(f64, usize)>> = self
            .solutions
            .iter()
            .zip(&self.logliks)
            .map(|(s, l)| Some((l.as_ref().copied()?, s.as_ref()?.df())))
            .collect();
        ebic_values(&fits, self.n, self.p, gamma)
    }

    pub fn ebic_select(&self, gamma: f64) -> Result<usize> {
        argmin_score(&self.ebic_scores(gamma))
    }

    pub fn adjacencies(&self) -> Vec<Vec<Vec<bool>>> {
        self.solutions.iter().flatten().map(|s| s.adjacency()).collect()
    }
}

/// Warm-started glasso fits of `s` along a descending grid.
pub fn baseline_path(
    s: &DMatrix<f64>,
    n: usize,
    lambdas: &[f64],
    opts: &GlassoOptions,
) -> Result<BaselinePath> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    let half_n = n as f64 / 2.0;
    let mut solutions = Vec::with_capacity(lambdas.len());
    let mut logliks = Vec::with_capacity(lambdas.len());
    let mut warm: Option<GlassoSolution> = None;
    for &lambda in lambdas {
        match glasso_fit(s, lambda, opts, warm.as_ref()) {
            Ok(sol) => {
                let ll = log_det(&sol.theta)
                    .map(|ld| half_n * (ld - sol.theta.component_mul(s).sum()));
                logliks.push(ll);
                warm = Some(sol.clone());
                solutions.push(Some(sol));
            }
            Err(e) => {
                log::warn!("baseline fit at lambda {lambda} failed: {e}");
                logliks.push(None);
                solutions.push(None);
            }
        }
    }
    Ok(BaselinePath {
        n,
        p: s.nrows(),
        lambdas: lambdas.to_vec(),
        solutions,
        logliks,
    })
}

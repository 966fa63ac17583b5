//! Graphical lasso by block coordinate descent.
//!
//! Maximises `log|Theta| - tr(S Theta) - lambda ||Theta||_1` by cycling over
//! columns of the working covariance `W = Theta^-1` and solving a lasso
//! problem for each. The problem splits exactly along the connected
//! components of the graph `|s_ij| > lambda`, which are solved separately.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlassoOptions {
    /// Convergence threshold on the average absolute change of `W` per
    /// sweep. `None` means `1e-4 * mean |off-diagonal s|`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub penalize_diagonal: bool,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 1000,
            penalize_diagonal: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GlassoSolution {
    pub theta: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// KKT residual of the returned precision matrix.
    pub residual: f64,
    pub penalize_diagonal: bool,
}

impl GlassoSolution {
    /// Number of nonzero upper-triangle off-diagonal entries.
    pub fn df(&self) -> usize {
        let p = self.theta.nrows();
        (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .filter(|&(i, j)| self.theta[(i, j)] != 0.0)
            .count()
    }

    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let p = self.theta.nrows();
        (0..p)
            .map(|i| (0..p).map(|j| i != j && self.theta[(i, j)] != 0.0).collect())
            .collect()
    }
}

fn check_input(s: &DMatrix<f64>) -> Result<()> {
    let p = s.nrows();
    if s.ncols() != p {
        return Err(Error::Dimension(format!("s is {}x{}", p, s.ncols())));
    }
    let scale = s.amax().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..p {
        for j in i + 1..p {
            asym = asym.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if asym > 1e-10 * scale || asym.is_nan() {
        return Err(Error::NotSymmetric(asym));
    }
    if (0..p).any(|i| !(s[(i, i)] > 0.0)) {
        return Err(Error::InvalidArgument("s must have a positive diagonal".into()));
    }
    Ok(())
}

fn components(s: &DMatrix<f64>, lambda: f64) -> Vec<Vec<usize>> {
    let p = s.nrows();
    let mut label = vec![usize::MAX; p];
    let mut out = Vec::new();
    for root in 0..p {
        if label[root] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![root];
        label[root] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..p {
                if label[j] == usize::MAX && s[(i, j)].abs() > lambda {
                    label[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

#[inline]
fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso coordinate descent for column `j`:
/// minimise `b' W11 b / 2 - s12' b + lambda |b|_1`, maintaining `wb = W11 b`.
/// Index `j` itself is skipped in `beta` and `wb`.
fn lasso_column(
    w: &DMatrix<f64>,
    s: &DMatrix<f64>,
    j: usize,
    lambda: f64,
    beta: &mut [f64],
    wb: &mut [f64],
    tol: f64,
) {
    let q = w.nrows();
    wb.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..q {
        if k != j && beta[k] != 0.0 {
            let b = beta[k];
            for (l, v) in wb.iter_mut().enumerate() {
                *v += w[(l, k)] * b;
            }
        }
    }
    let update = |k: usize, beta: &mut [f64], wb: &mut [f64]| -> f64 {
        let wkk = w[(k, k)];
        let old = beta[k];
        let z = s[(j, k)] - (wb[k] - wkk * old);
        let new = soft(z, lambda) / wkk;
        if new != old {
            let d = new - old;
            beta[k] = new;
            for (l, v) in wb.iter_mut().enumerate() {
                *v += w[(l, k)] * d;
            }
            (d * wkk).abs()
        } else {
            0.0
        }
    };
    for _ in 0..10_000 {
        let mut delta: f64 = 0.0;
        for k in (0..q).filter(|&k| k != j) {
            delta = delta.max(update(k, beta, wb));
        }
        if delta < tol {
            break;
        }
        // settle the active set before the next full pass
        let active: Vec<usize> = (0..q).filter(|&k| k != j && beta[k] != 0.0).collect();
        for _ in 0..10_000 {
            let mut d: f64 = 0.0;
            for &k in &active {
                d = d.max(update(k, beta, wb));
            }
            if d < tol {
                break;
            }
        }
    }
}

struct Block {
    theta: DMatrix<f64>,
    w: DMatrix<f64>,
    iterations: usize,
    converged: bool,
}

fn solve_block(
    s: &DMatrix<f64>,
    lambda: f64,
    diag_pen: f64,
    tol: f64,
    max_iter: usize,
    warm: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) -> Block {
    let q = s.nrows();
    let mut w = match warm {
        Some((ws, _)) => ws.clone(),
        None => s.clone(),
    };
    for i in 0..q {
        w[(i, i)] = s[(i, i)] + diag_pen;
    }
    // column j of `b` holds the lasso coefficients of column j
    let mut b = DMatrix::zeros(q, q);
    if let Some((_, wt)) = warm {
        for j in 0..q {
            for k in 0..q {
                if k != j {
                    b[(k, j)] = -wt[(k, j)] / wt[(j, j)];
                }
            }
        }
    }
    let mut beta = vec![0.0; q];
    let mut wb = vec![0.0; q];
    let mut iterations = 0;
    let mut converged = q == 1;
    let npairs = (q * (q - 1)).max(1) as f64;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut change = 0.0;
        for j in 0..q {
            beta.copy_from_slice(b.column(j).as_slice());
            lasso_column(&w, s, j, lambda, &mut beta, &mut wb, tol * 0.01);
            for k in 0..q {
                if k != j {
                    change += 2.0 * (w[(k, j)] - wb[k]).abs();
                    w[(k, j)] = wb[k];
                    w[(j, k)] = wb[k];
                }
            }
            b.column_mut(j).copy_from_slice(&beta);
        }
        converged = change / npairs < tol;
    }

    let mut theta = DMatrix::zeros(q, q);
    for j in 0..q {
        let mut d = w[(j, j)];
        for k in 0..q {
            if k != j {
                d -= w[(k, j)] * b[(k, j)];
            }
        }
        let tjj = 1.0 / d;
        theta[(j, j)] = tjj;
        for k in 0..q {
            if k != j {
                theta[(k, j)] = -b[(k, j)] * tjj;
            }
        }
    }
    // symmetrise; an entry is nonzero only if both halves are
    for i in 0..q {
        for j in i + 1..q {
            let (a, c) = (theta[(i, j)], theta[(j, i)]);
            let v = if a == 0.0 || c == 0.0 { 0.0 } else { 0.5 * (a + c) };
            theta[(i, j)] = v;
            theta[(j, i)] = v;
        }
    }
    Block {
        theta,
        w,
        iterations,
        converged,
    }
}

fn mean_abs_offdiag(s: &DMatrix<f64>) -> f64 {
    let p = s.nrows();
    if p < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                acc += s[(i, j)].abs();
            }
        }
    }
    acc / (p * (p - 1)) as f64
}

/// Solves the graphical lasso at one penalty, optionally warm-started from a
/// previous solution of the same dimension.
pub fn glasso_fit(
    s: &DMatrix<f64>,
    lambda: f64,
    opts: &GlassoOptions,
    warm: Option<&GlassoSolution>,
) -> Result<GlassoSolution> {
    check_input(s)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty must be >= 0, got {lambda}")));
    }
    let p = s.nrows();
    if let Some(ws) = warm {
        if ws.theta.nrows() != p {
            return Err(Error::Dimension("warm start has a different dimension".into()));
        }
    }
    let tol = opts
        .tol
        .unwrap_or_else(|| 1e-4 * mean_abs_offdiag(s))
        .max(1e-12);
    let diag_pen = if opts.penalize_diagonal { lambda } else { 0.0 };

    let mut theta = DMatrix::zeros(p, p);
    let mut sigma = DMatrix::zeros(p, p);
    let mut iterations = 0;
    let mut converged = true;
    for comp in components(s, lambda) {
        let sub = DMatrix::from_fn(comp.len(), comp.len(), |a, b| s[(comp[a], comp[b])]);
        let warm_sub = warm.map(|ws| {
            (
                DMatrix::from_fn(comp.len(), comp.len(), |a, b| ws.sigma[(comp[a], comp[b])]),
                DMatrix::from_fn(comp.len(), comp.len(), |a, b| ws.theta[(comp[a], comp[b])]),
            )
        });
        let block = solve_block(
            &sub,
            lambda,
            diag_pen,
            tol,
            opts.max_iter,
            warm_sub.as_ref().map(|(a, b)| (a, b)),
        );
        iterations = iterations.max(block.iterations);
        converged &= block.converged;
        for (a, &i) in comp.iter().enumerate() {
            for (b, &j) in comp.iter().enumerate() {
                theta[(i, j)] = block.theta[(a, b)];
                sigma[(i, j)] = block.w[(a, b)];
            }
        }
    }
    if !converged {
        log::warn!("glasso did not converge in {} sweeps at lambda {lambda}", opts.max_iter);
    }
    let mut sol = GlassoSolution {
        theta,
        sigma,
        lambda,
        iterations,
        converged,
        residual: 0.0,
        penalize_diagonal: opts.penalize_diagonal,
    };
    sol.residual = kkt_check(&sol, s);
    Ok(sol)
}

/// Largest violation of the optimality conditions, with `W` recomputed as
/// the inverse of the returned precision matrix. Infinite if that matrix is
/// not positive definite.
pub fn kkt_check(sol: &GlassoSolution, s: &DMatrix<f64>) -> f64 {
    let p = s.nrows();
    let w = match sol.theta.clone().cholesky() {
        Some(c) => c.inverse(),
        None => return f64::INFINITY,
    };
    let lambda = sol.lambda;
    let diag_pen = if sol.penalize_diagonal { lambda } else { 0.0 };
    let mut worst: f64 = 0.0;
    for i in 0..p {
        worst = worst.max((w[(i, i)] - s[(i, i)] - diag_pen).abs());
        for j in 0..p {
            if i == j {
                continue;
            }
            let t = sol.theta[(i, j)];
            let g = s[(i, j)] - w[(i, j)];
            let v = if t == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * t.signum()).abs()
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Penalised log-likelihood `log|theta| - tr(s theta) - lambda ||theta||_1`.
pub fn objective(theta: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let Some(chol) = theta.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let trace = s.component_mul(theta).sum();
    let p = theta.nrows();
    let mut l1 = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j || penalize_diagonal {
                l1 += theta[(i, j)].abs();
            }
        }
    }
    log_det - trace - lambda * l1
}

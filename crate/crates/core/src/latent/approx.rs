use super::{cell_bounds, check_theta, EStepMethod, ExpectedMoments};
use crate::data::{CutPointTable, GenotypeMatrix};
use crate::error::{Error, Result};
use crate::normal;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::collections::HashMap;

const MF_TOL: f64 = 1e-4;
const MF_MAX_PASSES: usize = 50;

/// Mean-field factors for the observed coordinates of one missingness
/// pattern: `mu_a = sum_b beta_ab m_b`, variance `1 / P_aa`.
struct Field {
    start: Vec<usize>,
    idx: Vec<usize>,
    beta: Vec<f64>,
    sigma: Vec<f64>,
    marginal_sd: Vec<f64>,
}

impl Field {
    fn new(prec: &DMatrix<f64>, marginal_sd: Vec<f64>) -> Self {
        let q = prec.nrows();
        let mut start = vec![0];
        let mut idx = Vec::new();
        let mut beta = Vec::new();
        let mut sigma = Vec::with_capacity(q);
        for a in 0..q {
            let d = prec[(a, a)];
            for b in 0..q {
                if b != a && prec[(a, b)] != 0.0 {
                    idx.push(b);
                    beta.push(-prec[(a, b)] / d);
                }
            }
            start.push(idx.len());
            sigma.push(1.0 / d.sqrt());
        }
        Self {
            start,
            idx,
            beta,
            sigma,
            marginal_sd,
        }
    }

    /// Mean and variance of the conditional mean of coordinate `a` under
    /// the current factorised moments.
    #[inline]
    fn cond_mean(&self, a: usize, m: &[f64], s: &[f64]) -> (f64, f64) {
        let r = self.start[a]..self.start[a + 1];
        let mut mean = 0.0;
        let mut var = 0.0;
        for (&b, &w) in self.idx[r.clone()].iter().zip(&self.beta[r]) {
            mean += w * m[b];
            var += w * w * (s[b] - m[b] * m[b]);
        }
        (mean, var.max(0.0))
    }

    /// Fixed point of the mean-field equations for one row. Returns first
    /// moments, second moments, entropy and whether it converged.
    fn solve(&self, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>, f64, bool) {
        let q = lo.len();
        let mut m = Vec::with_capacity(q);
        let mut s = Vec::with_capacity(q);
        for a in 0..q {
            let sd = self.marginal_sd[a];
            let (mm, ss) = normal::std_truncated_moments(lo[a] / sd, hi[a] / sd);
            m.push(sd * mm);
            s.push(sd * sd * ss);
        }
        let mut converged = false;
        for _ in 0..MF_MAX_PASSES {
            let mut delta: f64 = 0.0;
            for a in 0..q {
                let (mu, var_mu) = self.cond_mean(a, &m, &s);
                let sg = self.sigma[a];
                let (tm, ts) = normal::std_truncated_moments((lo[a] - mu) / sg, (hi[a] - mu) / sg);
                let new_m = mu + sg * tm;
                let new_s = var_mu + mu * mu + 2.0 * sg * tm * mu + sg * sg * ts;
                delta = delta.max((new_m - m[a]).abs());
                m[a] = new_m;
                s[a] = new_s.max(new_m * new_m);
            }
            if delta < MF_TOL {
                converged = true;
                break;
            }
        }
        let mut entropy = 0.0;
        for a in 0..q {
            let (mu, _) = self.cond_mean(a, &m, &s);
            entropy += normal::truncated_entropy(mu, self.sigma[a], lo[a], hi[a]);
        }
        (m, s, entropy, converged)
    }
}

fn submatrix(x: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| x[(rows[a], cols[b])])
}

/// Mean-field E-step.
///
/// Missing coordinates are integrated out exactly: the observed block is
/// handled with its marginal precision (a Schur complement), and the missing
/// block is filled in from the Gaussian regression of missing on observed
/// coordinates. A row with every marker missing therefore contributes
/// exactly `theta^-1`.
pub fn approx_expected_covariance(
    g: &GenotypeMatrix,
    cuts: &CutPointTable,
    theta: &DMatrix<f64>,
) -> Result<ExpectedMoments> {
    let (n, p) = (g.n(), g.p());
    let sigma = check_theta(theta, p)?.inverse();
    let (lo, hi) = cell_bounds(g, cuts)?;

    let mut groups: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
    let mut lookup: HashMap<Vec<bool>, usize> = HashMap::new();
    for i in 0..n {
        let pattern: Vec<bool> = g.row(i).iter().map(Option::is_none).collect();
        let k = *lookup.entry(pattern.clone()).or_insert_with(|| {
            groups.push((pattern, Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(i);
    }

    let mut rbar = DMatrix::zeros(p, p);
    let mut means = DMatrix::zeros(n, p);
    let mut entropy = 0.0;
    let mut stalled = 0usize;
    for (pattern, rows) in &groups {
        let obs: Vec<usize> = (0..p).filter(|&j| !pattern[j]).collect();
        let mis: Vec<usize> = (0..p).filter(|&j| pattern[j]).collect();
        let (prec, regress, mis_cov) = if mis.is_empty() {
            (theta.clone(), None, None)
        } else {
            let t_mm = submatrix(theta, &mis, &mis);
            let chol = t_mm.clone().cholesky().ok_or(Error::NotPositiveDefinite("theta"))?;
            let inv_mm = chol.inverse();
            let t_mo = submatrix(theta, &mis, &obs);
            let a = -(&inv_mm * &t_mo);
            let prec = submatrix(theta, &obs, &obs) + t_mo.transpose() * &a;
            let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            entropy += rows.len() as f64
                * (mis.len() as f64 * (normal::LN_SQRT_2PI + 0.5) - 0.5 * log_det);
            (prec, Some(a), Some(inv_mm))
        };
        let q = obs.len();
        let field = Field::new(&prec, obs.iter().map(|&j| sigma[(j, j)].sqrt()).collect());

        let solved: Vec<(Vec<f64>, Vec<f64>, f64, bool)> = rows
            .par_iter()
            .map(|&i| {
                let l: Vec<f64> = obs.iter().map(|&j| lo[i * p + j]).collect();
                let h: Vec<f64> = obs.iter().map(|&j| hi[i * p + j]).collect();
                field.solve(&l, &h)
            })
            .collect();

        let mut mg = DMatrix::zeros(rows.len(), q);
        let mut excess = vec![0.0; q];
        for (r, (m, s, h, ok)) in solved.iter().enumerate() {
            for a in 0..q {
                mg[(r, a)] = m[a];
                excess[a] += s[a] - m[a] * m[a];
            }
            entropy += h;
            if !ok {
                stalled += 1;
            }
        }
        let mut r_oo = mg.tr_mul(&mg);
        for a in 0..q {
            r_oo[(a, a)] += excess[a];
        }
        for (a, &j) in obs.iter().enumerate() {
            for (b, &k) in obs.iter().enumerate() {
                rbar[(j, k)] += r_oo[(a, b)];
            }
        }
        for (r, &i) in rows.iter().enumerate() {
            for (a, &j) in obs.iter().enumerate() {
                means[(i, j)] = mg[(r, a)];
            }
        }
        if let (Some(a), Some(inv_mm)) = (regress, mis_cov) {
            let r_mo = &a * &r_oo;
            let r_mm = &r_mo * a.transpose() + inv_mm * rows.len() as f64;
            for (u, &j) in mis.iter().enumerate() {
                for (b, &k) in obs.iter().enumerate() {
                    rbar[(j, k)] += r_mo[(u, b)];
                    rbar[(k, j)] += r_mo[(u, b)];
                }
                for (v, &k) in mis.iter().enumerate() {
                    rbar[(j, k)] += r_mm[(u, v)];
                }
            }
            let fill = &mg * a.transpose();
            for (r, &i) in rows.iter().enumerate() {
                for (u, &j) in mis.iter().enumerate() {
                    means[(i, j)] = fill[(r, u)];
                }
            }
        }
    }
    if stalled > 0 {
        log::warn!("mean-field iteration did not converge for {stalled} of {n} samples");
    }
    if n > 0 {
        rbar /= n as f64;
    }
    let rbar = (&rbar + rbar.transpose()) * 0.5;
    Ok(ExpectedMoments {
        rbar,
        means: Some(means),
        method: EStepMethod::Approx,
        entropy,
        traces: Vec::new(),
    })
}

use super::{cell_bounds, check_theta, EStepMethod, ExpectedMoments, GibbsConfig};
use crate::data::{CutPointTable, GenotypeMatrix};
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::rng_for;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

/// Draws are accumulated into blocks of about this many rows before the
/// outer-product sum is formed with one matrix product.
const BLOCK_ROWS: usize = 4096;

/// Full conditionals of a zero-mean Gaussian with precision theta, stored
/// as sparse neighbour lists.
struct Conditionals {
    start: Vec<usize>,
    idx: Vec<usize>,
    coef: Vec<f64>,
    sigma: Vec<f64>,
    ln_sigma: Vec<f64>,
}

impl Conditionals {
    fn new(theta: &DMatrix<f64>) -> Self {
        let p = theta.nrows();
        let mut start = Vec::with_capacity(p + 1);
        let mut idx = Vec::new();
        let mut coef = Vec::new();
        let mut sigma = Vec::with_capacity(p);
        start.push(0);
        for j in 0..p {
            let d = theta[(j, j)];
            for k in 0..p {
                if k != j && theta[(j, k)] != 0.0 {
                    idx.push(k);
                    coef.push(theta[(j, k)] / d);
                }
            }
            start.push(idx.len());
            sigma.push(1.0 / d.sqrt());
        }
        let ln_sigma = sigma.iter().map(|s| s.ln()).collect();
        Self {
            start,
            idx,
            coef,
            sigma,
            ln_sigma,
        }
    }

    #[inline]
    fn mean(&self, j: usize, z: &[f64]) -> f64 {
        let r = self.start[j]..self.start[j + 1];
        let mut acc = 0.0;
        for (&k, &c) in self.idx[r.clone()].iter().zip(&self.coef[r]) {
            acc += c * z[k];
        }
        -acc
    }

    /// One systematic-scan sweep. Returns the summed log full-conditional
    /// density of the new values.
    fn sweep<R: Rng + ?Sized>(&self, z: &mut [f64], lo: &[f64], hi: &[f64], rng: &mut R) -> f64 {
        let mut logp = 0.0;
        for j in 0..z.len() {
            let mu = self.mean(j, z);
            let s = self.sigma[j];
            let a = (lo[j] - mu) / s;
            let b = (hi[j] - mu) / s;
            let (x, lz) = normal::sample_std_truncated(a, b, rng);
            z[j] = mu + s * x;
            logp += -0.5 * x * x - normal::LN_SQRT_2PI - self.ln_sigma[j] - lz;
        }
        logp
    }
}

fn initial_state(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| normal::std_truncated_moments(a, b).0)
        .collect()
}

/// Component-wise Gibbs sampler for `N(mean, cov)` restricted to the box
/// `[lower, upper]`. Returns an `N x p` block of retained draws; column `j`
/// is the chain of coordinate `j`.
pub fn sample_truncated_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    cfg: &GibbsConfig,
) -> Result<DMatrix<f64>> {
    cfg.check()?;
    let p = mean.len();
    if cov.nrows() != p || cov.ncols() != p || lower.len() != p || upper.len() != p {
        return Err(Error::Dimension(format!("mean has length {p}; cov and bounds must match")));
    }
    for (&a, &b) in lower.iter().zip(upper) {
        if !(a < b) {
            return Err(Error::InvalidInterval { lower: a, upper: b });
        }
    }
    let theta = cov
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("cov"))?
        .inverse();
    let cond = Conditionals::new(&theta);
    let lo: Vec<f64> = lower.iter().zip(mean.iter()).map(|(a, m)| a - m).collect();
    let hi: Vec<f64> = upper.iter().zip(mean.iter()).map(|(b, m)| b - m).collect();
    let mut z = initial_state(&lo, &hi);
    let mut rng = rng_for(cfg.seed, &[0]);
    for _ in 0..cfg.burn_in {
        cond.sweep(&mut z, &lo, &hi, &mut rng);
    }
    let mut out = DMatrix::zeros(cfg.sweeps, p);
    for s in 0..cfg.sweeps {
        cond.sweep(&mut z, &lo, &hi, &mut rng);
        for j in 0..p {
            out[(s, j)] = z[j] + mean[j];
        }
    }
    Ok(out)
}

/// Gibbs E-step whose chains persist between calls, so later calls (next
/// EM iteration, next penalty on a path) start near stationarity.
#[derive(Clone, Debug)]
pub struct GibbsSampler {
    n: usize,
    p: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    state: Vec<f64>,
    cfg: GibbsConfig,
    calls: u64,
}

impl GibbsSampler {
    pub fn new(g: &GenotypeMatrix, cuts: &CutPointTable, cfg: GibbsConfig) -> Result<Self> {
        cfg.check()?;
        let (lo, hi) = cell_bounds(g, cuts)?;
        let state = initial_state(&lo, &hi);
        Ok(Self {
            n: g.n(),
            p: g.p(),
            lo,
            hi,
            state,
            cfg,
            calls: 0,
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn config(&self) -> &GibbsConfig {
        &self.cfg
    }

    pub fn estep(&mut self, theta: &DMatrix<f64>) -> Result<ExpectedMoments> {
        let (n, p) = (self.n, self.p);
        check_theta(theta, p)?;
        let cond = Conditionals::new(theta);
        let sweeps = self.cfg.sweeps;
        let burn = if self.calls == 0 {
            self.cfg.burn_in
        } else {
            self.cfg.warm_burn_in
        };
        let call = self.calls;
        let seed = self.cfg.seed;
        let trace = self.cfg.trace;
        let rows_per_chunk = (BLOCK_ROWS / sweeps).max(1);
        let (lo, hi) = (&self.lo, &self.hi);

        let parts: Vec<(DMatrix<f64>, f64, Vec<Vec<f64>>)> = self
            .state
            .par_chunks_mut(rows_per_chunk * p.max(1))
            .enumerate()
            .map(|(c, block)| {
                let rows = block.len() / p;
                let mut zc = DMatrix::zeros(rows * sweeps, p);
                let mut entropy = 0.0;
                let mut traces = Vec::new();
                for r in 0..rows {
                    let i = c * rows_per_chunk + r;
                    let mut rng = rng_for(seed, &[call, i as u64]);
                    let z = &mut block[r * p..(r + 1) * p];
                    let (lo, hi) = (&lo[i * p..(i + 1) * p], &hi[i * p..(i + 1) * p]);
                    for _ in 0..burn {
                        cond.sweep(z, lo, hi, &mut rng);
                    }
                    let mut logp = 0.0;
                    let mut chain = Vec::new();
                    for s in 0..sweeps {
                        logp += cond.sweep(z, lo, hi, &mut rng);
                        let row = r * sweeps + s;
                        for (j, &v) in z.iter().enumerate() {
                            zc[(row, j)] = v;
                        }
                        if i < trace {
                            chain.push(z.iter().map(|v| v * v).sum::<f64>() / p as f64);
                        }
                    }
                    entropy -= logp / sweeps as f64;
                    if i < trace {
                        traces.push(chain);
                    }
                }
                (zc.tr_mul(&zc), entropy, traces)
            })
            .collect();

        let mut rbar = DMatrix::zeros(p, p);
        let mut entropy = 0.0;
        let mut traces = Vec::new();
        for (acc, e, t) in parts {
            rbar += acc;
            entropy += e;
            traces.extend(t);
        }
        rbar /= (n * sweeps) as f64;
        let rbar = (&rbar + rbar.transpose()) * 0.5;
        if n * sweeps >= p && rbar.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("sampled second-moment matrix"));
        }
        self.calls += 1;
        Ok(ExpectedMoments {
            rbar,
            means: None,
            method: EStepMethod::Gibbs,
            entropy,
            traces,
        })
    }
}

/// One-shot Gibbs E-step with a cold start.
pub fn gibbs_expected_covariance(
    g: &GenotypeMatrix,
    cuts: &CutPointTable,
    theta: &DMatrix<f64>,
    cfg: &GibbsConfig,
) -> Result<ExpectedMoments> {
    GibbsSampler::new(g, cuts, cfg.clone())?.estep(theta)
}

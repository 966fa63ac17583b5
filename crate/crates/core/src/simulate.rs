//! Synthetic epistatic networks and ordinal genotype data.

use crate::data::{CutPointTable, GenotypeMatrix, MarkerInfo, MarkerMap};
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::{derive_seed, rng_for};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Latent {
    Normal,
    T3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub p: usize,
    pub n: usize,
    /// States per marker.
    pub k: usize,
    /// Linkage groups (chromosomes).
    pub groups: usize,
    /// Probability of an extra edge between non-adjacent markers of one group.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Probability of an edge between markers on different groups.
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub latent: Latent,
    pub seed: u64,
    /// Fixed cumulative probabilities for the cut-points of every marker
    /// instead of random ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_quantiles: Option<Vec<f64>>,
}

fn default_alpha() -> f64 {
    0.01
}

fn default_beta() -> f64 {
    0.02
}

impl SimulationSpec {
    pub fn new(p: usize, n: usize, k: usize, groups: usize, latent: Latent, seed: u64) -> Self {
        Self {
            p,
            n,
            k,
            groups,
            alpha: default_alpha(),
            beta: default_beta(),
            latent,
            seed,
            cut_quantiles: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.p == 0 || self.n == 0 {
            return bad("p and n must be positive");
        }
        if self.k < 2 || self.k > 255 {
            return bad("k must be between 2 and 255");
        }
        if self.groups == 0 || self.groups > self.p {
            return bad("groups must be between 1 and p");
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return bad("alpha and beta must be probabilities");
        }
        if let Some(q) = &self.cut_quantiles {
            if q.len() != self.k - 1
                || q.iter().any(|&v| !(v > 0.0 && v < 1.0))
                || q.windows(2).any(|w| w[0] >= w[1])
            {
                return bad("cut_quantiles must be k - 1 increasing values in (0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrueNetwork {
    pub adjacency: Vec<Vec<bool>>,
    /// Group index of every marker.
    pub chromosome: Vec<usize>,
    pub theta: DMatrix<f64>,
}

impl TrueNetwork {
    pub fn edge_count(&self) -> usize {
        let p = self.adjacency.len();
        (0..p)
            .map(|i| (i + 1..p).filter(|&j| self.adjacency[i][j]).count())
            .sum()
    }

    pub fn marker_map(&self) -> MarkerMap {
        let mut pos = vec![0usize; self.chromosome.iter().max().map_or(0, |m| m + 1)];
        MarkerMap {
            markers: self
                .chromosome
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    pos[c] += 1;
                    MarkerInfo {
                        name: marker_name(j),
                        chromosome: (c + 1).to_string(),
                        position: pos[c] as f64,
                    }
                })
                .collect(),
        }
    }
}

pub fn marker_name(j: usize) -> String {
    format!("M{}", j + 1)
}

/// Group sizes `p / g`, with the remainder spread over the first groups.
pub fn group_sizes(p: usize, g: usize) -> Vec<usize> {
    (0..g).map(|i| p / g + usize::from(i < p % g)).collect()
}

pub fn simulate_network(spec: &SimulationSpec) -> Result<TrueNetwork> {
    spec.check()?;
    let p = spec.p;
    let mut chromosome = Vec::with_capacity(p);
    for (c, size) in group_sizes(p, spec.groups).into_iter().enumerate() {
        chromosome.extend(std::iter::repeat(c).take(size));
    }
    let mut rng = rng_for(spec.seed, &[1]);
    let mut adjacency = vec![vec![false; p]; p];
    for i in 0..p {
        for j in i + 1..p {
            let edge = if chromosome[i] == chromosome[j] {
                j == i + 1 || rng.random::<f64>() < spec.alpha
            } else {
                rng.random::<f64>() < spec.beta
            };
            adjacency[i][j] = edge;
            adjacency[j][i] = edge;
        }
    }
    let theta = make_precision(&adjacency, derive_seed(spec.seed, &[2]))?;
    Ok(TrueNetwork {
        adjacency,
        chromosome,
        theta,
    })
}

/// Random precision matrix supported on `adjacency` plus the diagonal:
/// off-diagonal magnitudes in [0.3, 0.6] with random signs, diagonal
/// dominance with margin 0.1, then rescaled so the covariance has unit
/// diagonal.
pub fn make_precision(adjacency: &[Vec<bool>], seed: u64) -> Result<DMatrix<f64>> {
    let p = adjacency.len();
    if adjacency.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("adjacency must be square".into()));
    }
    let mut rng = rng_for(seed, &[]);
    let mut theta: DMatrix<f64> = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            if adjacency[i][j] || adjacency[j][i] {
                let mag: f64 = rng.random_range(0.3..=0.6);
                let v = if rng.random::<bool>() { mag } else { -mag };
                theta[(i, j)] = v;
                theta[(j, i)] = v;
            }
        }
    }
    for i in 0..p {
        theta[(i, i)] = theta.row(i).iter().map(|v| v.abs()).sum::<f64>() + 0.1;
    }
    crate::em::unit_variance(&theta)
}

/// Latent rows from the network's covariance and their discretisation.
/// Returns the genotypes and the cut-points used to produce them.
pub fn simulate_genotypes(
    net: &TrueNetwork,
    spec: &SimulationSpec,
) -> Result<(GenotypeMatrix, CutPointTable)> {
    spec.check()?;
    let p = net.theta.nrows();
    if p != spec.p {
        return Err(Error::Dimension("network and spec disagree on p".into()));
    }
    let sigma = net
        .theta
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("theta"))?
        .inverse();
    let l = sigma.cholesky().ok_or(Error::NotPositiveDefinite("sigma"))?.l();

    let t3 = StudentsT::new(0.0, 1.0, 3.0).expect("valid t distribution");
    let scale_t = (1.0f64 / 3.0).sqrt();
    let marginal_quantile = |u: f64| match spec.latent {
        Latent::Normal => normal::quantile(u),
        Latent::T3 => scale_t * t3.inverse_cdf(u),
    };
    let mut rng = rng_for(spec.seed, &[3]);
    let mut interior = Vec::with_capacity(p);
    for _ in 0..p {
        let mut u: Vec<f64> = match &spec.cut_quantiles {
            Some(q) => q.clone(),
            None => (0..spec.k - 1).map(|_| rng.random::<f64>()).collect(),
        };
        u.sort_by(f64::total_cmp);
        interior.push(u.into_iter().map(marginal_quantile).collect::<Vec<f64>>());
    }
    // duplicate uniforms are measure-zero; nudge to keep cuts increasing
    for c in interior.iter_mut() {
        for a in 1..c.len() {
            if c[a] <= c[a - 1] {
                c[a] = c[a - 1] + 1e-12;
            }
        }
    }
    let cuts = CutPointTable::from_interior(interior)?;

    let chi = ChiSquared::new(3.0).expect("valid chi-square");
    let mut values = Vec::with_capacity(spec.n * p);
    for i in 0..spec.n {
        let mut r = rng_for(spec.seed, &[4, i as u64]);
        let e = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut r));
        let mut z = &l * e;
        if spec.latent == Latent::T3 {
            let w: f64 = chi.sample(&mut r);
            z *= scale_t / (w / 3.0).sqrt();
        }
        for j in 0..p {
            let c = cuts.marker(j);
            // category y satisfies c[y] < z <= c[y + 1]
            let y = c[1..c.len() - 1].iter().filter(|&&t| t < z[j]).count();
            values.push(Some(y as u8));
        }
    }
    let names = (0..p).map(marker_name).collect();
    let g = GenotypeMatrix::new(names, spec.n, values)?.with_states(vec![spec.k; p])?;
    Ok((g, cuts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backbone_of_paper_scenario() {
        let mut spec = SimulationSpec::new(90, 10, 3, 5, Latent::Normal, 7);
        spec.alpha = 0.0;
        spec.beta = 0.0;
        let net = simulate_network(&spec).unwrap();
        assert_eq!(group_sizes(90, 5), vec![18; 5]);
        assert_eq!(net.edge_count(), 85);
        assert!(!net.adjacency[17][18]);
        assert!(net.adjacency[18][19]);
    }

    #[test]
    fn remainder_goes_to_first_groups() {
        assert_eq!(group_sizes(11, 3), vec![4, 4, 3]);
    }

    #[test]
    fn precision_support_and_unit_variance() {
        let adj = vec![
            vec![false, true, false],
            vec![true, false, true],
            vec![false, true, false],
        ];
        let t = make_precision(&adj, 3).unwrap();
        assert_eq!(t[(0, 2)], 0.0);
        assert!(t[(0, 1)] != 0.0 && t[(1, 2)] != 0.0);
        let s = t.clone().cholesky().unwrap().inverse();
        for i in 0..3 {
            assert!((s[(i, i)] - 1.0).abs() < 1e-12);
        }
        let empty = vec![vec![false; 4]; 4];
        let d = make_precision(&empty, 1).unwrap();
        assert!((d - DMatrix::identity(4, 4)).amax() < 1e-14);
    }

    #[test]
    fn median_cut_is_balanced() {
        let mut spec = SimulationSpec::new(5, 2000, 2, 1, Latent::Normal, 11);
        spec.cut_quantiles = Some(vec![0.5]);
        let net = simulate_network(&spec).unwrap();
        let (g, cuts) = simulate_genotypes(&net, &spec).unwrap();
        assert_eq!(cuts.marker(0)[1], 0.0);
        let sd = (2000.0f64 * 0.25).sqrt();
        for j in 0..5 {
            let ones = g.category_counts(j)[1] as f64;
            assert!((ones - 1000.0).abs() < 3.0 * sd, "marker {j}: {ones}");
        }
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let spec = SimulationSpec::new(12, 30, 3, 2, Latent::T3, 5);
        let a = simulate_genotypes(&simulate_network(&spec).unwrap(), &spec).unwrap();
        let b = simulate_genotypes(&simulate_network(&spec).unwrap(), &spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert!(a.0.states().iter().all(|&k| k == 3));
    }
}
